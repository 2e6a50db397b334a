"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--points 4096] [--repeat 5]

Times kd-tree construction, nearest-neighbor queries, a full chamfer evaluation and one
TSDF frame integration for each available backend, and checks that both give the same
answers.
"""
import argparse
import timeit

import numpy as np

from roomlayout import kernels, synth
from roomlayout.tsdf import TsdfVolume, integrate


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def chamfer(backend, a, b):
    _, da = backend.KdTree(b).query(a)
    _, db = backend.KdTree(a).query(b)
    return 0.5 * (da.mean() + db.mean())


def bench_nn(backend, pts, queries, repeat):
    tree = backend.KdTree(pts)
    return {
        "kd-tree build": best(lambda: backend.KdTree(pts), repeat),
        "nn query": best(lambda: tree.query(queries), repeat),
        "chamfer": best(lambda: chamfer(backend, queries, pts), repeat),
    }


def bench_tsdf(backend, frame, voxel, repeat):
    dims = np.ceil(np.array([4.0, 3.0, 2.5]) / voxel) + 1

    def run():
        return integrate(TsdfVolume(np.zeros(3), dims, voxel), frame, backend=backend)
    return best(run, repeat), run()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--voxel", type=float, default=0.04)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    pts = rng.normal(size=(args.points, 3))
    queries = rng.normal(size=(args.points, 3))
    spec = synth.SceneSpec()
    frame = synth.render_depth_sequence(spec, synth.orbit_camera_path(spec, 1))[0]

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled kernels unavailable; timing the fallback only")

    rows, results = {}, {}
    for name, be in backends.items():
        rows[name] = bench_nn(be, pts, queries, args.repeat)
        rows[name]["tsdf frame"], vol = bench_tsdf(be, frame, args.voxel, args.repeat)
        results[name] = (be.KdTree(pts).query(queries), vol)

    names = list(backends)
    print(f"{'kernel':<16}" + "".join(f"{n + ' [ms]':>14}" for n in names) + ("    speedup" if len(names) > 1 else ""))
    for key in rows[names[0]]:
        cells = "".join(f"{rows[n][key] * 1e3:>14.2f}" for n in names)
        extra = f"{rows['python'][key] / rows['cython'][key]:>10.1f}x" if len(names) > 1 else ""
        print(f"{key:<16}{cells}{extra}")

    if len(names) > 1:
        (ip, dp), vp = results["python"]
        (ic, dc), vc = results["cython"]
        same_nn = np.array_equal(ip, ic) and np.array_equal(dp, dc)
        same_tsdf = np.allclose(vp.tsdf, vc.tsdf, atol=1e-12) and np.array_equal(vp.weight, vc.weight)
        print(f"\nidentical nearest neighbors: {same_nn}; identical TSDF volumes: {same_tsdf}")


if __name__ == "__main__":
    main()
