"""Command-line surface.

Every command validates inputs, runs the corresponding library routine, and
writes artifacts atomically with embedded provenance (tool version, seed,
config hash). Stochastic commands require --seed and are bit-reproducible
from identical inputs and seed. FOCUSKIT_OUTDIR supplies the default output
directory when a command's output option is omitted.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import sys
from pathlib import Path

import click

from . import __version__
from .depth_from_focus import DEFAULT_WINDOW_RADIUS_PX, estimate_depth
from .fileio import (
    artifact_metadata,
    atomic_write_bytes,
    canonical_json,
    read_depth_pfm,
    read_json,
    read_ply,
    read_png,
    read_transform_json,
    write_depth_pfm,
    write_json,
    write_ply,
    write_png,
)
from .images import FocusStack
from .metrics import DEFAULT_DELTA_THRESHOLDS, DEFAULT_GRAD_SCALES, DEFAULT_SILOG_LAMBDA, compute_metrics
from .optics import ThinLensConfig
from .pointcloud import FilterParams, IcpParams, PinholeIntrinsics, PointCloud, project_zbuffer
from .pointcloud import aggregate as aggregate_frames
from .sampling import (
    FdSamplerConfig,
    SeededRng,
    interpolate_fds,
    sample_f_number,
    sample_fd_bounds,
    sample_kappa,
    sample_psf_shape,
)
from .synth import fill_depth_holes, synthesize_stack

OUTDIR_ENV = "FOCUSKIT_OUTDIR"


@dataclasses.dataclass(frozen=True)
class JobConfig:
    """A command invocation reduced to hashable provenance."""

    command: str
    params: dict

    def to_dict(self) -> dict:
        return {"command": self.command, **self.params}


def _job_config(command: str, params: dict) -> JobConfig:
    clean = {}
    for k, v in params.items():
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, tuple):
            v = list(v)
        clean[k] = v
    return JobConfig(command, clean)


def _provenance(command: str, params: dict, seed: int | None) -> dict:
    return artifact_metadata(seed, _job_config(command, params).to_dict())


def _resolve_outdir(outdir) -> Path:
    if outdir is None:
        outdir = os.environ.get(OUTDIR_ENV, ".")
    path = Path(outdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise _fail(f"could not parse float list {text!r}: {e}")


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise _fail(f"could not parse int list {text!r}: {e}")


def _load_lens(path, f_number: float | None) -> ThinLensConfig:
    lens = ThinLensConfig.from_json(path)
    if f_number is not None:
        lens = ThinLensConfig(
            focal_length_m=lens.focal_length_m,
            f_number=f_number,
            pixel_pitch_m=lens.pixel_pitch_m,
            principal_point=lens.principal_point,
        )
    return lens


@click.group()
@click.version_option(version=__version__, prog_name="focuskit")
@click.option("-v", "--verbose", is_flag=True, help="Log progress details to stderr.")
def main(verbose: bool):
    """Focus-stack synthesis, lidar-style depth ground truth, and evaluation."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _sample_stack_plan(depth, rng, fd_mode, stack_size, psf_shape, f_number, kappa):
    cfg = FdSamplerConfig(mode=fd_mode, stack_size_s=stack_size)
    p = sample_psf_shape(rng) if psf_shape is None else psf_shape
    n = sample_f_number(rng) if f_number is None else f_number
    k = sample_kappa(rng, cfg) if kappa is None else kappa
    z_near, z_far = sample_fd_bounds(depth, cfg, rng)
    fds = interpolate_fds(z_near, z_far, stack_size, k)
    return cfg, p, n, k, z_near, z_far, fds


@main.command()
@click.option("--rgb", "rgb_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lens", "lens_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", required=True, type=int, help="RNG seed; identical seeds reproduce outputs bit for bit.")
@click.option("--stack-size", default=5, show_default=True, type=click.IntRange(min=2))
@click.option("--mode", default="layered", show_default=True, type=click.Choice(["reference", "layered"]))
@click.option("--layers", default=32, show_default=True, type=click.IntRange(min=2))
@click.option("--fd-mode", default="percentile", show_default=True, type=click.Choice(["percentile", "automatic", "mixed"]))
@click.option("--psf-shape", type=float, default=None, help="Fix the PSF shape exponent instead of sampling it.")
@click.option("--f-number", type=float, default=None, help="Fix the f-number instead of sampling it.")
@click.option("--kappa", type=float, default=None, help="Fix the FD interpolation exponent instead of sampling it.")
@click.option("--outdir", default=None, type=click.Path(file_okay=False))
def synthesize(rgb_path, depth_path, lens_path, seed, stack_size, mode, layers, fd_mode, psf_shape, f_number, kappa, outdir):
    """Render a physically based focus stack from an RGB image plus depth."""
    params = dict(click.get_current_context().params)
    out = _resolve_outdir(outdir)
    try:
        rgb = read_png(rgb_path)
        depth = fill_depth_holes(read_depth_pfm(depth_path))
        lens = _load_lens(lens_path, f_number)
        rng = SeededRng(seed)
        cfg, p, n, k, z_near, z_far, fds = _sample_stack_plan(
            depth, rng, fd_mode, stack_size, psf_shape, f_number, kappa
        )
        if f_number is None:
            lens = _load_lens(lens_path, n)
        stack = synthesize_stack(rgb, depth, lens, fds, p, mode=mode, n_layers=layers)
    except ValueError as e:
        raise _fail(str(e))

    names = []
    for i, image in enumerate(stack.images):
        name = f"image_{i:02d}.png"
        write_png(out / name, image)
        names.append(name)
    metadata = stack.metadata()
    metadata.update(
        {
            "images": names,
            "principal_point": list(lens.principal_point),
            "z_near": z_near,
            "z_far": z_far,
            "kappa": k,
            "layers": layers if mode == "layered" else None,
            "sampler": cfg.to_dict(),
            "rng": rng.metadata(),
        }
    )
    metadata.update(_provenance("synthesize", params, seed))
    write_json(out / "metadata.json", metadata)
    click.echo(f"wrote {len(names)} images + metadata.json to {out}")


@main.command(name="sample-fds")
@click.option("--seed", required=True, type=int)
@click.option("--stack-size", default=5, show_default=True, type=click.IntRange(min=2))
@click.option("--fd-mode", default="automatic", show_default=True, type=click.Choice(["percentile", "automatic", "mixed"]))
@click.option("--depth", "depth_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Depth map for percentile bounds.")
@click.option("--kappa", type=float, default=None)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
def sample_fds(seed, stack_size, fd_mode, depth_path, kappa, out_path):
    """Sample focus-distance bounds and the interpolated distances."""
    params = dict(click.get_current_context().params)
    try:
        depth = read_depth_pfm(depth_path) if depth_path else None
        rng = SeededRng(seed)
        cfg = FdSamplerConfig(mode=fd_mode, stack_size_s=stack_size)
        k = sample_kappa(rng, cfg) if kappa is None else kappa
        z_near, z_far = sample_fd_bounds(depth, cfg, rng)
        fds = interpolate_fds(z_near, z_far, stack_size, k)
    except ValueError as e:
        raise _fail(str(e))
    doc = {
        "z_near": z_near,
        "z_far": z_far,
        "kappa": k,
        "focus_distances_m": fds,
        "sampler": cfg.to_dict(),
        "rng": rng.metadata(),
    }
    doc.update(_provenance("sample-fds", params, seed))
    if out_path:
        write_json(out_path, doc)
    click.echo(canonical_json(doc), nl=False)


@main.command()
@click.argument("frames", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha", default=0.008, show_default=True, type=float)
@click.option("--k-neighbors", default=7, show_default=True, type=click.IntRange(min=0))
@click.option("--warmup", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--interval", default=10, show_default=True, type=click.IntRange(min=1))
@click.option("--no-filter", is_flag=True, help="Disable density filtering (plain union).")
@click.option("--voxel", default=None, type=float, help="ICP voxel downsample size in meters.")
@click.option("--gate", default=0.5, show_default=True, type=float, help="ICP correspondence gate in meters.")
@click.option("--max-iterations", default=30, show_default=True, type=click.IntRange(min=1))
def aggregate(frames, out_path, alpha, k_neighbors, warmup, interval, no_filter, voxel, gate, max_iterations):
    """Register and union a PLY frame sequence with adaptive outlier filtering."""
    params = dict(click.get_current_context().params)
    try:
        clouds = [read_ply(p) for p in frames]
        filter_params = None if no_filter else FilterParams(alpha, k_neighbors, warmup, interval)
        icp_params = IcpParams(max_iterations=max_iterations, max_correspondence_m=gate, voxel_size_m=voxel)
        merged = aggregate_frames(clouds, filter_params, icp_params)
    except (ValueError, RuntimeError) as e:
        raise _fail(str(e))
    write_ply(out_path, merged)
    write_json(Path(str(out_path) + ".meta.json"), _provenance("aggregate", params, None))
    click.echo(f"aggregated {len(frames)} frames -> {len(merged)} points at {out_path}")


@main.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--intrinsics", "intrinsics_path", required=True, type=click.Path(exists=True, dir_okay=False), help="JSON with fx, fy, cx, cy.")
@click.option("--width", required=True, type=click.IntRange(min=1))
@click.option("--height", required=True, type=click.IntRange(min=1))
@click.option("--splat-radius", default=3, show_default=True, type=click.IntRange(min=0))
@click.option("--view", "view_path", default=None, type=click.Path(exists=True, dir_okay=False), help="Rigid transform JSON applied before projection.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def project(cloud_path, intrinsics_path, width, height, splat_radius, view_path, out_path):
    """Project a point cloud to a depth map with min-depth z-buffering."""
    params = dict(click.get_current_context().params)
    try:
        cloud = read_ply(cloud_path)
        intr = PinholeIntrinsics.from_dict(read_json(intrinsics_path))
        if view_path:
            cloud = cloud.transformed(read_transform_json(view_path))
        if len(cloud) == 0:
            click.echo("warning: empty cloud, writing an all-invalid depth map", err=True)
        depth = project_zbuffer(cloud, intr, width, height, splat_radius)
    except ValueError as e:
        raise _fail(str(e))
    write_depth_pfm(out_path, depth)
    write_json(Path(str(out_path) + ".meta.json"), _provenance("project", params, None))
    click.echo(f"projected {len(cloud)} points -> {int(depth.valid.sum())} valid pixels at {out_path}")


@main.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--thresholds", default=",".join(str(t) for t in DEFAULT_DELTA_THRESHOLDS), show_default=True)
@click.option("--silog-lambda", default=DEFAULT_SILOG_LAMBDA, show_default=True, type=float)
@click.option("--grad-scales", default=DEFAULT_GRAD_SCALES, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="Write the report as JSON here.")
def evaluate(pred_path, gt_path, thresholds, silog_lambda, grad_scales, out_path):
    """Compare a predicted depth map against ground truth."""
    params = dict(click.get_current_context().params)
    try:
        pred = read_depth_pfm(pred_path)
        gt = read_depth_pfm(gt_path)
        report = compute_metrics(pred, gt, _parse_floats(thresholds), silog_lambda, grad_scales)
    except ValueError as e:
        raise _fail(str(e))
    click.echo(report.to_text())
    if out_path:
        doc = report.to_dict()
        doc.update(_provenance("evaluate", params, None))
        write_json(out_path, doc)


def _stack_from_metadata(metadata_path) -> FocusStack:
    meta = read_json(metadata_path)
    base = Path(metadata_path).parent
    images = tuple(read_png(base / name) for name in meta["images"])
    h, w = images[0].height, images[0].width
    pp = meta.get("principal_point", [(w - 1) / 2.0, (h - 1) / 2.0])
    lens = ThinLensConfig(
        focal_length_m=float(meta["focal_length_m"]),
        f_number=float(meta["f_number"]),
        pixel_pitch_m=float(meta["pixel_pitch_m"]),
        principal_point=(float(pp[0]), float(pp[1])),
    )
    return FocusStack(
        images,
        tuple(float(d) for d in meta["focus_distances_m"]),
        lens,
        float(meta["psf_shape_p"]),
        str(meta["mode"]),
    )


@main.command()
@click.option("--stack", "stack_meta_path", required=True, type=click.Path(exists=True, dir_okay=False), help="metadata.json of a synthesized stack.")
@click.option("--window", default=DEFAULT_WINDOW_RADIUS_PX, show_default=True, type=click.IntRange(min=1))
@click.option("--no-refine", is_flag=True, help="Skip parabolic peak refinement.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def dfo(stack_meta_path, window, no_refine, out_path):
    """Classical depth from focus over a stack (argmax of sharpness)."""
    params = dict(click.get_current_context().params)
    try:
        stack = _stack_from_metadata(stack_meta_path)
        depth = estimate_depth(stack, window, refine=not no_refine)
    except (KeyError, ValueError) as e:
        raise _fail(str(e))
    write_depth_pfm(out_path, depth)
    write_json(Path(str(out_path) + ".meta.json"), _provenance("dfo", params, None))
    click.echo(f"estimated depth for {len(stack)} images -> {out_path}")


@main.command()
@click.option("--rgb", "rgb_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lens", "lens_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", required=True, type=int)
@click.option("--f-numbers", default="1.0,2.0,4.0", show_default=True, help="Aperture axis.")
@click.option("--stack-sizes", default="3,5,9", show_default=True, help="Stack-size axis.")
@click.option("--kappas", default="0.0,1.0", show_default=True, help="FD distribution axis.")
@click.option("--layers", default=32, show_default=True, type=click.IntRange(min=2))
@click.option("--window", default=DEFAULT_WINDOW_RADIUS_PX, show_default=True, type=click.IntRange(min=1))
@click.option("--outdir", default=None, type=click.Path(file_okay=False))
def sweep(rgb_path, depth_path, lens_path, seed, f_numbers, stack_sizes, kappas, layers, window, outdir):
    """Robustness sweep: synthesize stacks across the axes, estimate depth
    with the classical oracle, and tabulate metrics per configuration."""
    params = dict(click.get_current_context().params)
    out = _resolve_outdir(outdir)
    try:
        rgb = read_png(rgb_path)
        gt = read_depth_pfm(depth_path)
        depth = fill_depth_holes(gt)
        axis_n = _parse_floats(f_numbers)
        axis_s = _parse_ints(stack_sizes)
        axis_k = _parse_floats(kappas)
        if not axis_n or not axis_s or not axis_k:
            raise ValueError("every sweep axis needs at least one value")

        cfg = FdSamplerConfig(mode="percentile", stack_size_s=max(max(axis_s), 2))
        rng = SeededRng(seed)
        z_near, z_far = sample_fd_bounds(depth, cfg, rng)

        rows = []
        for n in axis_n:
            for s in axis_s:
                for k in axis_k:
                    lens = _load_lens(lens_path, n)
                    fds = interpolate_fds(z_near, z_far, s, k)
                    p = sample_psf_shape(rng)
                    stack = synthesize_stack(rgb, depth, lens, fds, p, mode="layered", n_layers=layers)
                    est = estimate_depth(stack, window)
                    report = compute_metrics(est, gt)
                    rows.append(
                        {
                            "f_number": n,
                            "stack_size": s,
                            "kappa": k,
                            "psf_shape_p": p,
                            **report.to_dict(),
                        }
                    )
    except ValueError as e:
        raise _fail(str(e))

    doc = {"z_near": z_near, "z_far": z_far, "rows": rows, "rng": rng.metadata()}
    doc.update(_provenance("sweep", params, seed))
    write_json(out / "sweep.json", doc)

    delta_keys = sorted(rows[0]["delta"])
    header = ["f_number", "stack_size", "kappa", "abs_rel", "rmse", "silog"] + [f"delta_{k}" for k in delta_keys]
    lines = [",".join(header)]
    for row in rows:
        cells = [f"{row['f_number']:g}", str(row["stack_size"]), f"{row['kappa']:g}"]
        cells += [f"{row['abs_rel']:.6f}", f"{row['rmse']:.6f}", f"{row['silog']:.6f}"]
        cells += [f"{row['delta'][k]:.6f}" for k in delta_keys]
        lines.append(",".join(cells))
    atomic_write_bytes(out / "sweep.csv", ("\n".join(lines) + "\n").encode("ascii"))
    click.echo(f"swept {len(rows)} configurations -> {out / 'sweep.csv'}")


@main.command(name="serve-cleanup")
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--save-dir", default=None, type=click.Path(file_okay=False), help="Where POST /save writes; defaults to the cloud's directory.")
def serve_cleanup(cloud_path, host, port, save_dir):
    """Serve the point-cloud cleanup session API for the browser UI."""
    import uvicorn

    from .service import create_app

    app = create_app(cloud_path, save_dir=save_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
