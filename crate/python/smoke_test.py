"""Builds the extension with cargo and exercises it from Python.

Usage: python3 python/smoke_test.py
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module(dest: Path) -> None:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "toolamp-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libpytoolamp.so"
    shutil.copy(built, dest / "pytoolamp.so")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        build_module(Path(tmp))
        sys.path.insert(0, tmp)
        import pytoolamp

        tree = pytoolamp.Tree("[['SMILES2Property_1','UniMol_0'],'SMILES2Property_1']")
        assert tree.name == "[['SMILES2Property_1', 'UniMol_0'], 'SMILES2Property_1']"
        assert len(tree.leaves) == 3 and tree.depth == 2

        assert pytoolamp.levenshtein("kitten", "sitting") == 3
        assert abs(pytoolamp.bleu(list("abcd"), list("abcd"), 2) - 1.0) < 1e-12
        assert pytoolamp.tanimoto([1, 2], [2, 3], 8) == 1 / 3
        scores = pytoolamp.score_instance("molecule_design", "CCO", "CCO")
        assert scores["exact"] == 1.0

        edges = pytoolamp.topology_edges("chain", 4)
        assert len(edges) == 5 and edges[0] == ("user", "a1")

        spec = {
            "n_instances": 40,
            "tools": [{"name": "A", "p_correct": 0.7}, {"name": "B", "p_correct": 0.7}],
            "policy": {"judge_accuracy": 0.9},
            "seed": 5,
        }
        dataset, tools = pytoolamp.generate_environment(json.dumps(spec))
        assert len(dataset.splitlines()) == 40 and len(json.loads(tools)) == 2

        search = {"fitness_metric": "exact", "max_stage2_rounds": 1}
        best, score, library = pytoolamp.amplify(json.dumps(spec), json.dumps(search))
        atomic = max(json.loads(l)["score"] for l in library.splitlines() if '"atomic"' in l)
        assert score >= atomic, (best, score, atomic)

        try:
            pytoolamp.Tree("[oops")
        except ValueError:
            pass
        else:
            raise AssertionError("malformed name accepted")
    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
