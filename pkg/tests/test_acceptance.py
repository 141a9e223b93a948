"""Shipping gate: one test per released guarantee, each checked at its stated
tolerance and runtime budget. Every test prints a single PASS/FAIL line so the
run reads as a checklist even under captured output."""

import hashlib
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.spatial import cKDTree

from focuskit.attention_ref import (
    StackAttnParams,
    TokenGrid,
    attention_weights,
    forward_extract,
)
from focuskit.cli import main as cli_main
from focuskit.depth_from_focus import estimate_depth
from focuskit.fileio import write_depth_pfm, write_json, write_ply, write_png
from focuskit.images import DepthMap, RgbImage
from focuskit.metrics import (
    GRAD_MATCH_WEIGHT,
    compute_metrics,
    grad_match_loss,
    silog_loss,
    total_loss,
)
from focuskit.optics import PsfSpec, ThinLensConfig, coc_meters, coc_pixels, make_kernel
from focuskit.pointcloud import (
    FilterParams,
    IcpParams,
    PinholeIntrinsics,
    PointCloud,
    RigidTransform,
    aggregate,
    density_filter,
    icp_register,
    project_zbuffer,
    splat_offsets,
)
from focuskit.sampling import (
    FdSamplerConfig,
    SeededRng,
    interpolate_fds,
    sample_fd_bounds,
    sample_psf_shape,
)
from focuskit.synth import (
    synthesize_image_layered,
    synthesize_image_reference,
    synthesize_stack,
)
from tests.conftest import make_texture, make_two_plane_depth, psnr
from tests.test_attention import oracle_forward, toy_tokens


@contextmanager
def criterion(capsys, name: str, limit_s: float):
    """Time one guarantee and report it as a checklist line."""
    start = time.perf_counter()
    failed = True
    try:
        yield
        failed = False
    finally:
        elapsed = time.perf_counter() - start
        over = elapsed >= limit_s
        status = "FAIL" if failed or over else "PASS"
        with capsys.disabled():
            print(f"[{status}] {name} ({elapsed:.2f}s, limit {limit_s:.0f}s)")
    assert elapsed < limit_s, f"{name!r} exceeded its {limit_s:.0f}s runtime budget"


# --------------------------------------------------------------------------


def test_psf_family(capsys):
    with criterion(capsys, "PSF family matches Gaussian/disk limits; kernels sum to 1", 5.0):
        from focuskit.optics import psf_value

        offsets = np.linspace(-6.0, 6.0, 25)
        uu, vv = np.meshgrid(offsets, offsets)
        for c in (0.7, 1.5, 3.0):
            gauss = np.exp(-2.0 * (uu * uu + vv * vv) / (c * c)) / (c * c)
            got = psf_value(uu, vv, PsfSpec(2.0, c))
            assert np.abs(got - gauss).max() <= 1e-12

        for c in (2.0, 5.0):
            r = np.hypot(uu, vv)
            disk = np.where(r < c, 1.0 / (c * c), 0.0)
            away = (r < 0.9 * c) | (r > 1.1 * c)
            got = psf_value(uu, vv, PsfSpec(512.0, c))
            assert np.abs(got - disk)[away].max() <= 1e-3 / (c * c)

        for p in (1.0, 2.0, 4.0, 8.0, 64.0, 512.0):
            for c in (0.1, 0.3, 1.0, 3.0, 10.0, 40.0):
                k = make_kernel(PsfSpec(p, c))
                assert abs(float(k.weights.sum()) - 1.0) <= 1e-6, (p, c)


def test_circle_of_confusion(capsys):
    with criterion(capsys, "CoC zero in focus; hand fixture to 1e-9 relative", 1.0):
        lens = ThinLensConfig(0.05, 2.8, 4.3e-6, (319.5, 239.5))
        assert coc_meters(3.08, lens, 3.08) == 0.0
        expected = abs(1.0 - 3.08) / 1.0 * 0.05**2 / (2.8 * (3.08 - 0.05))
        got = coc_meters(1.0, lens, 3.08)
        assert abs(got - expected) / expected <= 1e-9


def test_synthesis(capsys):
    with criterion(capsys, "Synthesis: constant exact, impulse = kernel, layered PSNR >= 40", 30.0):
        lens = ThinLensConfig(0.01, 4.0, 5e-6, (31.5, 31.5))
        depth = make_two_plane_depth(64, 64, 1.2, 2.4)

        const = RgbImage(np.full((64, 64, 3), 0.5))
        for mode_out in (
            synthesize_image_reference(const, depth, lens, 1.2, 2.0),
            synthesize_image_layered(const, depth, lens, 1.2, 2.0, 32),
        ):
            np.testing.assert_array_equal(mode_out.data, const.data)

        flat = DepthMap.full(np.full((64, 64), 1.0))
        impulse = np.zeros((64, 64, 3))
        impulse[32, 32, :] = 1.0
        out = synthesize_image_reference(RgbImage(impulse), flat, lens, 1.6, 2.0)
        kern = make_kernel(PsfSpec(2.0, float(coc_pixels(1.0, lens, 1.6))))
        r = kern.radius_px
        assert r > 0
        expected = np.zeros((64, 64))
        expected[32 - r : 32 + r + 1, 32 - r : 32 + r + 1] = kern.weights
        for ch in range(3):
            assert np.abs(out.data[:, :, ch] - expected).max() <= 1e-10

        rgb = make_texture(64, 64, seed=11)
        ref = synthesize_image_reference(rgb, depth, lens, 1.2, 2.0)
        lay = synthesize_image_layered(rgb, depth, lens, 1.2, 2.0, 32)
        assert psnr(lay.data, ref.data) >= 40.0


def test_round_trip_depth_recovery(capsys):
    with criterion(capsys, "Round trip: 9-image stack, median AbsRel <= 0.05, plane labels >= 95%", 60.0):
        lens = ThinLensConfig(0.01, 4.0, 5e-6, (31.5, 31.5))
        near, far = 1.2, 2.4
        rgb = make_texture(64, 64, seed=11)
        depth = make_two_plane_depth(64, 64, near, far)
        fds = interpolate_fds(1.0, 3.0, 9, kappa=0.0)
        stack = synthesize_stack(rgb, depth, lens, fds, 2.0, mode="layered", n_layers=32)
        est = estimate_depth(stack)

        interior = np.zeros((64, 64), dtype=bool)
        interior[8:-8, 8:-8] = True
        boundary_band = np.zeros_like(interior)
        boundary_band[:, 32 - 9 : 32 + 9] = True
        textured = est.valid & interior & ~boundary_band
        assert textured.sum() > 1000
        rel = np.abs(est.data[textured] - depth.data[textured]) / depth.data[textured]
        assert np.median(rel) <= 0.05

        split = math.sqrt(near * far)
        labels_ok = (est.data < split) == (depth.data < split)
        agreement = labels_ok[est.valid].mean()
        assert agreement >= 0.95


def test_fd_sampler(capsys):
    with criterion(capsys, "FD sampler: kappa fixtures, mixed-mode ratio, p-sampler mean", 10.0):
        got = interpolate_fds(1.0, 8.0, 5, kappa=1.0)
        expected = [1.0, 1.28, 16.0 / 9.0, 32.0 / 11.0, 8.0]
        assert max(abs(g - e) for g, e in zip(got, expected)) <= 1e-9

        t = np.linspace(0.0, 1.0, 5)
        geometric = 1.0 ** (1.0 - t) * 8.0**t
        small = interpolate_fds(1.0, 8.0, 5, kappa=1e-4)
        assert np.abs(np.asarray(small) / geometric - 1.0).max() <= 1e-4
        zero = interpolate_fds(1.0, 8.0, 5, kappa=0.0)
        assert np.abs(np.asarray(zero) / geometric - 1.0).max() <= 1e-12

        depth = make_two_plane_depth(64, 64, 1.2, 2.4)
        cfg = FdSamplerConfig(mode="mixed")
        rng = SeededRng(101)
        hits = sum(
            1 for _ in range(50_000) if sample_fd_bounds(depth, cfg, rng) == (1.2, 2.4)
        )
        assert abs(hits / 50_000 - 0.200) <= 0.006

        rng = SeededRng(202)
        logs = [math.log2(sample_psf_shape(rng)) for _ in range(10_000)]
        assert abs(float(np.mean(logs)) - 3.0) <= 0.05


# --------------------------------------------------------------------------


def _rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rotation_angle_deg(r: np.ndarray) -> float:
    return math.degrees(math.acos(min(1.0, max(-1.0, (np.trace(r) - 1.0) / 2.0))))


def _room_walls() -> np.ndarray:
    grid = np.linspace(-1.5, 1.5, 13)
    gy, gz = np.meshgrid(grid, grid)
    flat = np.stack([gy.ravel(), gz.ravel()], axis=1)
    back = np.column_stack([np.full(len(flat), 3.0), flat[:, 0], flat[:, 1] + 1.5])
    left = np.column_stack([flat[:, 0] + 1.5, np.full(len(flat), -2.0), flat[:, 1] + 1.5])
    floor = np.column_stack([flat[:, 0] + 1.5, flat[:, 1], np.zeros(len(flat))])
    return np.vstack([back, left, floor])


def _sweep_with_floaters(n_frames: int, floaters_from: int, per_frame: int):
    """Sensor sweep through a static room; frames after floaters_from carry
    transient interior points. Floaters keep >= 5 cm mutual separation so they
    stay isolated for the density filter and outside a tight ICP gate."""
    walls = _room_walls()
    gen = np.random.Generator(np.random.PCG64(321))
    placed: list[np.ndarray] = []

    def draw_floater() -> np.ndarray:
        while True:
            p = gen.uniform([0.8, -1.2, 0.3], [2.2, 1.2, 1.6])
            if all(np.linalg.norm(p - q) >= 0.05 for q in placed):
                placed.append(p)
                return p

    frames = []
    for k in range(n_frames):
        yaw = _rot_z(0.15 * k)
        center = np.array([0.01 * k, 0.0, 1.0])
        world = walls
        if k >= floaters_from:
            world = np.vstack([walls] + [draw_floater()[None, :] for _ in range(per_frame)])
        frames.append(PointCloud((world - center) @ yaw, f"frame{k}"))
    last_walls = (walls - np.array([0.01 * (n_frames - 1), 0.0, 1.0])) @ _rot_z(0.15 * (n_frames - 1))
    return frames, last_walls, len(placed)


def _brute_density_mask(points: np.ndarray, origin, alpha: float, k: int) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    radius = alpha * np.linalg.norm(points - np.asarray(origin, dtype=np.float64), axis=1)
    return (d <= radius[:, None]).sum(axis=1) - 1 >= k


def test_icp_and_aggregation(capsys):
    with criterion(capsys, "ICP recovery, 120-frame sweep cleanup, density oracle", 120.0):
        gen = np.random.Generator(np.random.PCG64(97))
        src_pts = gen.random((500, 3))
        truth = RigidTransform(_rot_z(10.0), np.array([0.1, 0.0, 0.0]), "a", "b")
        target = PointCloud(truth.apply(src_pts), "b")
        est = icp_register(PointCloud(src_pts, "a"), target)
        assert np.abs(est.matrix() - truth.matrix()).max() <= 1e-6

        for seed in range(20):
            g = np.random.Generator(np.random.PCG64(seed))
            noisy = PointCloud(truth.apply(src_pts) + g.normal(0.0, 0.005, (500, 3)), "b")
            est = icp_register(PointCloud(src_pts, "a"), noisy)
            assert np.linalg.norm(est.translation - truth.translation) <= 0.002, seed
            assert _rotation_angle_deg(est.rotation @ truth.rotation.T) <= 0.2, seed

        frames, last_walls, n_floaters = _sweep_with_floaters(120, floaters_from=60, per_frame=5)
        assert n_floaters == 300
        cleaned = aggregate(
            frames,
            filter_params=FilterParams(),
            icp_params=IcpParams(max_correspondence_m=0.04, voxel_size_m=0.02),
        )
        dist, _ = cKDTree(last_walls).query(cleaned.points)
        n_structure = int((dist < 0.005).sum())
        n_floating = int((dist >= 0.005).sum())
        assert n_floating == 0
        assert n_structure >= 0.99 * 120 * len(last_walls)

        fixtures = [
            (300, 0.05, 3),
            (800, 0.02, 2),
            (150, 0.2, 5),
            (2000, 0.03, 4),
        ]
        for n, alpha, k in fixtures:
            g = np.random.Generator(np.random.PCG64(1000 + n))
            pts = np.column_stack([g.uniform(-1, 1, n), g.uniform(-1, 1, n), g.uniform(1, 3, n)])
            params = FilterParams(alpha=alpha, k_neighbors=k)
            kept = density_filter(PointCloud(pts, "s"), (0.0, 0.0, 0.0), params)
            mask = _brute_density_mask(pts, (0.0, 0.0, 0.0), alpha, k)
            np.testing.assert_array_equal(kept.points, pts[mask])


def test_projection(capsys):
    with criterion(capsys, "Z-buffer matches brute force exactly; 37-offset splat disk", 10.0):
        offs = splat_offsets(3)
        expected_disk = {
            (du, dv)
            for du in range(-3, 4)
            for dv in range(-3, 4)
            if du * du + dv * dv <= 3.5**2
        }
        assert {(int(a), int(b)) for a, b in offs} == expected_disk
        assert len(offs) == 37

        gen = np.random.Generator(np.random.PCG64(71))
        n = 10_000
        pts = np.column_stack(
            [gen.uniform(-2, 2, n), gen.uniform(-1.5, 1.5, n), gen.uniform(-1.0, 6.0, n)]
        )
        intr = PinholeIntrinsics(50.0, 55.0, 31.5, 23.5)
        w, h, r = 64, 48, 3
        dm = project_zbuffer(PointCloud(pts, "cam"), intr, w, h, splat_radius_px=r)

        best = np.full((h, w), np.inf)
        for x, y, z in pts:
            if z <= 0:
                continue
            ui = int(np.rint(intr.fx * (x / z) + intr.cx))
            vi = int(np.rint(intr.fy * (y / z) + intr.cy))
            for du, dv in expected_disk:
                px, py = ui + du, vi + dv
                if 0 <= px < w and 0 <= py < h and z < best[py, px]:
                    best[py, px] = z
        valid = np.isfinite(best)
        np.testing.assert_array_equal(dm.valid, valid)
        np.testing.assert_array_equal(dm.data[valid], best[valid])


def test_metrics_and_losses(capsys):
    with criterion(capsys, "Metrics: strict delta, exact scale invariance, composition", 5.0):
        # dyadic gt keeps the 1.25x product exact, pinning the ratio on the edge
        flat = DepthMap.full(np.full((32, 32), 2.0))
        boundary = DepthMap(1.25 * flat.data, flat.valid.copy())
        report = compute_metrics(boundary, flat)
        assert report.delta[1.25] == 0.0

        gen = np.random.Generator(np.random.PCG64(5))
        gt = DepthMap.full(0.5 + 4.0 * gen.random((32, 32)))

        for scale in (0.5, 2.0, 4.0):
            scaled = DepthMap(scale * gt.data, gt.valid.copy())
            assert silog_loss(scaled, gt, lam=1.0) == 0.0

        pred = DepthMap.full(gt.data * np.exp(0.3 * gen.standard_normal((32, 32))))
        composed = total_loss(pred, gt)
        recomputed = silog_loss(pred, gt) + GRAD_MATCH_WEIGHT * grad_match_loss(pred, gt)
        assert abs(composed - recomputed) <= 1e-12

        def padded(dm: DepthMap) -> DepthMap:
            # trailing growth keeps the dyadic subsample grids aligned
            data = np.pad(dm.data, ((0, 3), (0, 5)), constant_values=0.0)
            valid = np.pad(dm.valid, ((0, 3), (0, 5)), constant_values=False)
            return DepthMap(data, valid)

        base = compute_metrics(pred, gt).to_dict()
        grown = compute_metrics(padded(pred), padded(gt)).to_dict()
        assert base == grown


def test_stack_attention_reference(capsys):
    with criterion(capsys, "Attention: permutation, zero-init FD, softmax rows, oracle", 5.0):
        params = StackAttnParams.random(5, channels=4, n_heads=2, fd_zero_init=False)
        tokens = toy_tokens(7, m=4)
        fds = [1.0, 1.4, 2.2, 3.1]
        base = forward_extract(tokens, fds, params, l1=3)
        perm = [2, 0, 3, 1]
        shuffled = forward_extract(
            TokenGrid(tokens.values[perm]), [fds[i] for i in perm], params, l1=3
        )
        rel = np.abs(shuffled - base).max() / np.abs(base).max()
        assert rel <= 1e-5

        zero_init = StackAttnParams.random(9, channels=4, n_heads=2)
        out_a = forward_extract(tokens, fds, zero_init, l1=2)
        out_b = forward_extract(tokens, [9.0, 0.4, 5.5, 1.2], zero_init, l1=2)
        np.testing.assert_array_equal(out_a, out_b)

        gen = np.random.Generator(np.random.PCG64(47))
        x = 3.0 * gen.standard_normal((5, 8))
        weights = attention_weights(x, StackAttnParams.random(23, channels=8, n_heads=4))
        assert (weights >= 0).all()
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)

        toy = toy_tokens(31, m=3)
        fds3 = [0.8, 1.5, 2.9]
        got = forward_extract(toy, fds3, params, l1=2)
        want = oracle_forward(toy.values, fds3, params, l1=2)
        np.testing.assert_allclose(got, want, atol=1e-9)


# --------------------------------------------------------------------------


def _hash_tree(root) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_cli_determinism(capsys, tmp_path):
    with criterion(capsys, "CLI determinism: re-runs with the same seed are bit-identical", 60.0):
        runner = CliRunner()

        def run(args, env=None):
            res = runner.invoke(cli_main, args, env=env, catch_exceptions=False)
            assert res.exit_code == 0, res.output
            return res.output

        write_png(tmp_path / "rgb.png", make_texture(32, 32, seed=3))
        write_depth_pfm(tmp_path / "depth.pfm", make_two_plane_depth(32, 32, 1.2, 2.4))
        lens = ThinLensConfig(0.01, 4.0, 5e-6, (15.5, 15.5))
        write_json(tmp_path / "lens.json", lens.to_dict())

        gen = np.random.Generator(np.random.PCG64(13))
        base = np.column_stack([gen.random(200) * 2, gen.random(200) * 2, 2.0 + gen.random(200)])
        for k in range(3):
            write_ply(tmp_path / f"frame_{k}.ply", PointCloud(base - [0.005 * k, 0, 0], f"f{k}"))
        write_json(tmp_path / "intr.json", {"fx": 40.0, "fy": 40.0, "cx": 15.5, "cy": 15.5})
        gt = DepthMap.full(1.0 + gen.random((16, 16)))
        write_depth_pfm(tmp_path / "gt.pfm", gt)
        write_depth_pfm(tmp_path / "pred.pfm", DepthMap(gt.data * 1.1, gt.valid.copy()))

        synth_dir = tmp_path / "synth"
        synth_args = [
            "synthesize",
            "--rgb", str(tmp_path / "rgb.png"),
            "--depth", str(tmp_path / "depth.pfm"),
            "--lens", str(tmp_path / "lens.json"),
            "--seed", "7", "--stack-size", "3",
            "--outdir", str(synth_dir),
        ]
        frames = [str(tmp_path / f"frame_{k}.ply") for k in range(3)]
        reruns = {
            "synthesize": (synth_args, synth_dir),
            "sample-fds": (["sample-fds", "--seed", "11", "--out", str(tmp_path / "fds.json")], tmp_path / "fds.json"),
            "aggregate": (
                ["aggregate", *frames, "--out", str(tmp_path / "agg.ply"), "--no-filter"],
                tmp_path / "agg.ply",
            ),
            "project": (
                [
                    "project",
                    "--cloud", str(tmp_path / "frame_0.ply"),
                    "--intrinsics", str(tmp_path / "intr.json"),
                    "--width", "32", "--height", "32",
                    "--out", str(tmp_path / "proj.pfm"),
                ],
                tmp_path / "proj.pfm",
            ),
            "evaluate": (
                [
                    "evaluate",
                    "--pred", str(tmp_path / "pred.pfm"),
                    "--gt", str(tmp_path / "gt.pfm"),
                    "--out", str(tmp_path / "report.json"),
                ],
                tmp_path / "report.json",
            ),
            "sweep": (
                [
                    "sweep",
                    "--rgb", str(tmp_path / "rgb.png"),
                    "--depth", str(tmp_path / "depth.pfm"),
                    "--lens", str(tmp_path / "lens.json"),
                    "--seed", "5",
                    "--f-numbers", "2.0", "--stack-sizes", "3", "--kappas", "1.0",
                    "--outdir", str(tmp_path / "sweep"),
                ],
                tmp_path / "sweep",
            ),
        }
        for name, (args, artifact) in reruns.items():
            first_out = run(args)
            first = _hash_tree(artifact) if artifact.is_dir() else hashlib.sha256(artifact.read_bytes()).hexdigest()
            second_out = run(args)
            second = _hash_tree(artifact) if artifact.is_dir() else hashlib.sha256(artifact.read_bytes()).hexdigest()
            assert first == second, name
            assert first_out == second_out, name

        dfo_args = [
            "dfo",
            "--stack", str(synth_dir / "metadata.json"),
            "--out", str(tmp_path / "dfo.pfm"),
        ]
        run(dfo_args)
        first = hashlib.sha256((tmp_path / "dfo.pfm").read_bytes()).hexdigest()
        run(dfo_args)
        assert hashlib.sha256((tmp_path / "dfo.pfm").read_bytes()).hexdigest() == first
