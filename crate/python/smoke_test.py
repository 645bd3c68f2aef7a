#!/usr/bin/env python3
"""Smoke test for the `taskauto` extension module.

Build the module first (either profile works):

    cargo build -p taskauto-py --release

The script locates the built cdylib, stages it as an importable module, and
exercises the main types and operations. Exits nonzero on any failure.
"""

import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    target = Path(os.environ.get("CARGO_TARGET_DIR", REPO_ROOT / "target"))
    names = {
        "linux": "libtaskauto.so",
        "darwin": "libtaskauto.dylib",
        "win32": "taskauto.dll",
    }
    name = names.get(sys.platform, "libtaskauto.so")
    candidates = [target / profile / name for profile in ("release", "debug")]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit(
            "no built extension found; run `cargo build -p taskauto-py --release` first"
        )
    return max(built, key=lambda p: p.stat().st_mtime)


def stage_module(cdylib: Path, stage_dir: Path) -> None:
    suffix = ".pyd" if sys.platform == "win32" else ".so"
    shutil.copy2(cdylib, stage_dir / f"taskauto{suffix}")
    sys.path.insert(0, str(stage_dir))


def approx(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        stage_module(locate_cdylib(), Path(tmp))
        import taskauto

        print(f"taskauto {taskauto.__version__} loaded")

        # Tokenizer: build, encode, decode, file round trip.
        vocab = taskauto.Vocabulary.build(
            [
                "operate machinery and record data daily",
                "assist customers with care plans",
                "lead therapy sessions for patients",
            ],
            max_size=200,
        )
        assert len(vocab) > 4
        ids, mask, true_length = vocab.encode("operate machinery", max_len=12)
        assert len(ids) == 12 and len(mask) == 12
        assert ids[0] == 2 and ids[true_length - 1] == 3  # [CLS]/[SEP]
        assert sum(mask) == true_length
        assert vocab.decode(ids) == "operate machinery"
        vocab_path = Path(tmp) / "vocab.txt"
        vocab.save(vocab_path)
        reloaded = taskauto.Vocabulary.load(vocab_path)
        assert reloaded.encode("operate machinery", max_len=12)[0] == ids
        print("tokenizer ok")

        # Attention: uniform rows; masked keys get exactly zero weight.
        q = [[0.5, 0.5]] * 3
        k = [[1.0, -1.0]] * 3
        v = [[1.0], [2.0], [3.0]]
        output, weights = taskauto.attention(q, k, v, [1, 1, 1])
        assert all(approx(w, 1.0 / 3.0) for row in weights for w in row)
        assert approx(output[0][0], 2.0)
        _, masked = taskauto.attention(q, k, v, [1, 0, 1])
        assert all(row[1] == 0.0 for row in masked)
        print("attention ok")

        # Softmax / cross-entropy oracles.
        probs = taskauto.softmax([1.0, 2.0, 3.0])
        denom = sum(math.exp(z) for z in (1.0, 2.0, 3.0))
        for p, z in zip(probs, (1.0, 2.0, 3.0)):
            assert approx(p, math.exp(z) / denom, 1e-12)
        assert all(approx(p, 1 / 3, 1e-12) for p in taskauto.softmax([0.0, 0.0, 0.0]))
        assert approx(
            taskauto.cross_entropy([1 / 3, 1 / 3, 1 / 3], "substitution"),
            math.log(3.0),
            1e-12,
        )
        print("softmax/cross-entropy ok")

        # Vote resolution.
        assert taskauto.resolve_votes(["S", "S", "S", "S", "C"]) == "substitution"
        assert taskauto.resolve_votes(["S", "S", "C", "C", "N"]) is None
        assert (
            taskauto.resolve_votes(["N", "N", "N", "C", "C"], threshold=3)
            == "negligibility"
        )
        print("vote resolution ok")

        # Paraphrase validation and the offline mock provider.
        accepted, similarity, _ = taskauto.validate_paraphrase(
            "record test data", "record the data"
        )
        assert accepted and approx(similarity, 2.0 / 3.0, 1e-12)
        variants = taskauto.mock_paraphrase(
            "Generate reports utilizing visual aids such as charts, graphs, and "
            "narratives by examining and documenting test data.",
            n_variants=2,
        )
        assert variants[0].startswith("Create reports that incorporate visual elements")
        print("augmentation ok")

        # Metrics.
        report = taskauto.metrics_from_pairs(
            [("substitution", "substitution"), ("negligibility", "negligibility")]
        )
        assert report["accuracy"] == 1.0
        print("metrics ok")

        # Analytic gradients against finite differences on a tiny model.
        check = taskauto.gradient_check(seed=0)
        assert check.pop("pass") is True
        assert all(err <= 1e-6 for err in check.values())
        print(f"gradient check ok ({len(check)} tensors)")

        # Percent rendering used by the occupation report.
        assert taskauto.percent(244, 974) == "25.1%"
        assert taskauto.percent(128, 974) == "13.1%"
        print("percent rendering ok")

        # When the CLI demo has produced a checkpoint, run inference through
        # the bindings too.
        ckpt = REPO_ROOT / "out" / "ckpt.json"
        vocab_txt = REPO_ROOT / "out" / "vocab.txt"
        if ckpt.exists() and vocab_txt.exists():
            clf = taskauto.Classifier.load(ckpt, vocab_txt)
            result = clf.predict("Operate stamping machinery on the line")
            assert approx(sum(result["probabilities"]), 1.0)
            assert result["label"] in (
                "substitution",
                "complementarity",
                "negligibility",
            )
            assert result["terms"], "attention terms should be non-empty"
            print(f"classifier ok (label {result['label']})")
        else:
            print("classifier skipped (run the CLI demo to produce out/ckpt.json)")

    print("smoke test passed")


if __name__ == "__main__":
    main()
