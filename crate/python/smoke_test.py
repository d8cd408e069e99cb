"""Smoke test for the `pixels2pose` Python module.

Build the extension first (`cargo build --release -p pixels2pose-py`); the script loads it
from target/release, synthesizes a tiny dataset and exercises the exported functions.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    for profile in ("release", "debug"):
        for name in ("libpixels2pose_py.so", "libpixels2pose_py.dylib", "pixels2pose_py.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("pixels2pose", str(lib))
                spec = importlib.util.spec_from_loader("pixels2pose", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                return module
    sys.exit("extension not built: run `cargo build --release -p pixels2pose-py`")


def main():
    p2p = load_module()

    cfg = p2p.Config("seed = 3\n")
    assert cfg.seed == 3
    assert "[sensor]" in cfg.to_toml()
    try:
        p2p.Config("no_such_key = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "tiny.p2pd"
        rate = p2p.synth(cfg, 4, 1, str(path))
        assert rate > 0
        ds = p2p.Dataset.load(str(path))
        assert len(ds) == 4 and ds.persons == 1
        hist = ds.histogram(0)
        assert len(hist) == 16 and len(hist[0]) == 100
        depth = ds.depth(0)
        assert len(depth) == 32 and all(len(r) == 32 for r in depth)
        assert len(ds.joints3d(0)) == 1 and len(ds.joints3d(0)[0]) == 14

    blob = [
        [math.exp(-((u - 10) ** 2 + (v - 12) ** 2) / 4.5) for u in range(32)]
        for v in range(32)
    ]
    (u, v, score), = p2p.peaks(blob)
    assert abs(u - 10) < 0.25 and abs(v - 12) < 0.25 and abs(score - 1) < 1e-6

    assert p2p.average_error([(3.0, 4.0, 0.0)]) == 5.0
    assert abs(p2p.pck([(10.0, 0, 0), (20.0, 0, 0), (25.0, 0, 0)], 15.0) - 100 / 3) < 1e-9
    assert abs(p2p.rmse_axis([(0.0, 0, 0), (2.0, 0, 0)], 0) - math.sqrt(2)) < 1e-12
    assert p2p.pck([(1.0, 0, 0), None], 15.0) == 50.0
    print("python smoke test passed")


if __name__ == "__main__":
    main()
