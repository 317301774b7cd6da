"""Command-line surface: attribute, anomaly, cluster, score, validate-patch, optimize.

Every command takes explicit inputs plus an optional strict JSON config
(unknown keys are rejected; flags override config values), runs with an
explicit or printed default seed, and writes deterministic outputs. Report
paths render a matplotlib figure next to the delimited output unless
--no-plot is given. Exit codes: 0 success, 1 input/config error, 2 validation
failure (invalid patch / void result).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import anomaly as anomaly_mod
from . import patchopt
from .attribution import pseudo_label_rounds, save_clustering, save_pseudo_label_report
from .dataio import ImageBuffer, load_detection_log, load_png_rgb, load_samples, load_verdict_matrix, save_png_rgb
from .metrics import (
    DeepfakeScoreInput,
    DrivingScoreInput,
    VoidResultError,
    deepfake_final_score,
    driving_object_score,
    driving_total_score,
    face_attack_score,
)
from .patchcheck import BinaryMask, connected_components, validate_face_patch
from .retrieval import precision_at_5, retrieve_all, save_results_jsonl

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_VALIDATION = 2


class ConfigError(ValueError):
    pass


def _load_config(path: str | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s): {sorted(unknown)}")
    return config


def _pick(flag_value, config: dict, key: str, default):
    """Flag wins over config wins over default."""
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


def _resolve_seed(flag_value, config: dict) -> int:
    seed = _pick(flag_value, config, "seed", None)
    if seed is None:
        seed = 0
        print("seed: 0 (default)")
    return int(seed)


def _write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# attribute


def cmd_attribute(args: argparse.Namespace) -> int:
    config = _load_config(args.config, {"k", "seed"})
    k = int(_pick(args.k, config, "k", 5))
    probes = load_samples(args.probe)
    gallery = load_samples(args.gallery)
    results = retrieve_all(probes, gallery, k)
    out = Path(args.out)
    save_results_jsonl(results, out)
    print(f"wrote {out} ({len(results)} probes, top-{k})")

    have_labels = all(r.label is not None for r in probes.records)
    if have_labels and k == 5:
        gallery_labeled = all(r.label is not None for r in gallery.records)
        if not gallery_labeled:
            raise ValueError("gallery records must be labeled to compute precision@5")
        p5 = precision_at_5(
            results,
            {r.id: r.label for r in probes.records},
            {r.id: r.label for r in gallery.records},
        )
        precision_path = out.with_name(out.stem + "_precision.json")
        _write_json({"precision_at_5": p5, "n_probes": len(results)}, precision_path)
        print(f"precision@5: {p5:.6f} ({precision_path})")
    else:
        print("precision@5 skipped (needs labeled probes and k=5)")

    if not args.no_plot:
        from .plots import save_similarity_figure

        fig_path = out.with_name(out.stem + "_similarity.png")
        save_similarity_figure(results, fig_path)
        print(f"figure: {fig_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# anomaly


def cmd_anomaly(args: argparse.Namespace) -> int:
    allowed = {"K", "k_lof", "p", "g", "w1", "w2", "fusion_weights", "normalize", "seed"}
    config = _load_config(args.config, allowed)
    cfg_kwargs = {}
    for key in ("K", "k_lof", "p", "g", "w1", "w2", "fusion_weights", "normalize"):
        if key in config:
            cfg_kwargs[key] = config[key]
    if args.K is not None:
        cfg_kwargs["K"] = args.K
    if args.k_lof is not None:
        cfg_kwargs["k_lof"] = args.k_lof
    cfg = anomaly_mod.AnomalyConfig(**cfg_kwargs)
    seed = _resolve_seed(args.seed, config)

    probes = load_samples(args.probe)
    gallery = load_samples(args.gallery)
    report = anomaly_mod.mad_report(probes, gallery, cfg, seed=seed, threads=args.threads)

    out = Path(args.out)
    if args.format == "jsonl":
        anomaly_mod.save_report_jsonl(report, probes.ids, out)
    else:
        anomaly_mod.save_report_csv(report, probes.ids, out)
    print(f"wrote {out} ({len(probes)} probes)")

    if not args.no_plot:
        from .plots import save_anomaly_figure

        fig_path = out.with_name(out.stem + "_scores.png")
        save_anomaly_figure(report, probes.ids, fig_path)
        print(f"figure: {fig_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cluster


def cmd_cluster(args: argparse.Namespace) -> int:
    allowed = {"k_extra", "rounds", "top_frac", "min_class_count", "min_score", "seed"}
    config = _load_config(args.config, allowed)
    seed = _resolve_seed(args.seed, config)
    labeled = load_samples(args.labeled)
    unlabeled = load_samples(args.unlabeled)
    clustering, report = pseudo_label_rounds(
        labeled,
        unlabeled,
        k_extra=int(_pick(args.k_extra, config, "k_extra", 0)),
        rounds=int(_pick(args.rounds, config, "rounds", 3)),
        seed=seed,
        top_frac=float(_pick(args.top_frac, config, "top_frac", 0.9)),
        min_class_count=int(_pick(args.min_class_count, config, "min_class_count", 10)),
        min_score=float(_pick(args.min_score, config, "min_score", 0.7)),
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_clustering(clustering, outdir / "clustering.json")
    save_pseudo_label_report(report, outdir / "pseudo_labels.csv")
    print(
        f"wrote {outdir / 'clustering.json'} and {outdir / 'pseudo_labels.csv'} "
        f"({len(report.accepted)} accepted, {len(report.rejected)} rejected)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# score


def cmd_score(args: argparse.Namespace) -> int:
    if args.track == "deepfake":
        if None in (args.precision5, args.auc, args.subjective):
            raise ValueError("deepfake track needs --precision5, --auc, and --subjective")
        inp = DeepfakeScoreInput(precision5=args.precision5, auc=args.auc, subjective=args.subjective)
        doc = {
            "score": deepfake_final_score(inp),
            "components": {"precision5": inp.precision5, "auc": inp.auc, "subjective": inp.subjective},
        }
    elif args.track == "face":
        if args.verdicts is None:
            raise ValueError("face track needs --verdicts")
        verdicts = load_verdict_matrix(args.verdicts)
        doc = {
            "score": face_attack_score(verdicts),
            "components": {"n_pairs": int(verdicts.verdicts.shape[1])},
        }
    elif args.track == "driving":
        if args.log is None or args.patch is None:
            raise ValueError("driving track needs --log and --patch")
        log = load_detection_log(args.log)
        patch = load_png_rgb(args.patch)
        mask = BinaryMask(np.any(patch.array != 0, axis=2))
        regions = connected_components(mask, connectivity=args.connectivity).count
        inp = DrivingScoreInput(log=log, patch=patch, connected_region_count=regions)
        score = driving_object_score(inp, area_mode=args.area_mode)
        doc = {
            "score": score,
            "components": {
                "suppressed_fraction": float((log.counts == 0).mean()),
                "connected_regions": regions,
                "area_mode": args.area_mode,
            },
        }
    elif args.track == "driving-total":
        if None in (args.truck, args.person):
            raise ValueError("driving-total track needs --truck and --person")
        doc = {
            "score": driving_total_score(args.truck, args.person),
            "components": {"truck": args.truck, "person": args.person},
        }
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown track {args.track!r}")

    if args.out:
        _write_json(doc, args.out)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate-patch


def cmd_validate_patch(args: argparse.Namespace) -> int:
    adv = load_png_rgb(args.adv)
    orig = load_png_rgb(args.orig)
    report = validate_face_patch(adv, orig, connectivity=args.connectivity)
    doc = {
        "valid": report.valid,
        "component_count": report.count,
        "total_area": report.total_area,
        "connectivity": args.connectivity,
        "components": [
            {"pixel_count": c.pixel_count, "bounding_box": list(c.bounding_box)} for c in report.components
        ],
    }
    if args.out:
        _write_json(doc, args.out)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK if report.valid else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# optimize


_OPTIMIZE_KEYS = {
    "patch",
    "frames",
    "detector",
    "optimizer",
    "iterations",
    "step_size",
    "mu",
    "alpha",
    "beta",
    "gamma",
    "tv_mode",
    "palette",
    "noise_amplitude",
    "seed",
}


def _build_patch(config: dict) -> patchopt.PatchState:
    patch_cfg = dict(config.get("patch", {}))
    unknown = set(patch_cfg) - {"height", "width", "init", "value", "seed"}
    if unknown:
        raise ConfigError(f"patch: unknown key(s): {sorted(unknown)}")
    height = int(patch_cfg.get("height", 32))
    width = int(patch_cfg.get("width", 32))
    init = patch_cfg.get("init", "gray")
    if init == "gray":
        return patchopt.PatchState.initial(height, width, float(patch_cfg.get("value", 0.5)))
    if init == "random":
        return patchopt.PatchState.random(height, width, int(patch_cfg.get("seed", 0)))
    raise ConfigError(f"patch.init must be 'gray' or 'random', got {init!r}")


def _build_frames(config: dict, base_dir: Path) -> list[tuple[ImageBuffer, patchopt.Box]]:
    frames_cfg = config.get("frames")
    if frames_cfg is None:
        raise ConfigError("config needs a 'frames' entry")
    if isinstance(frames_cfg, list):
        frames = []
        for i, entry in enumerate(frames_cfg):
            if not isinstance(entry, dict) or set(entry) != {"image", "box"}:
                raise ConfigError(f"frames[{i}]: expected keys image and box")
            image = load_png_rgb(base_dir / entry["image"])
            box = tuple(int(v) for v in entry["box"])
            if len(box) != 4:
                raise ConfigError(f"frames[{i}]: box must be [x1, y1, x2, y2]")
            frames.append((image, box))
        if not frames:
            raise ConfigError("frames list is empty")
        return frames
    if isinstance(frames_cfg, dict) and set(frames_cfg) == {"synthetic"}:
        syn = dict(frames_cfg["synthetic"])
        allowed = {"count", "height", "width", "base_box", "vanish_frame", "frame_step", "background"}
        unknown = set(syn) - allowed
        if unknown:
            raise ConfigError(f"frames.synthetic: unknown key(s): {sorted(unknown)}")
        count = int(syn.get("count", 4))
        height = int(syn.get("height", 64))
        width = int(syn.get("width", 64))
        base_box = tuple(int(v) for v in syn.get("base_box", (16, 16, 48, 48)))
        model = patchopt.PinholeModel(vanish_frame=int(syn.get("vanish_frame", 269)), base_box=base_box)
        step = int(syn.get("frame_step", 30))
        background = syn.get("background", "gray")
        if background not in ("gray", "noise"):
            raise ConfigError("frames.synthetic.background must be 'gray' or 'noise'")
        frames = []
        for i in range(count):
            if background == "gray":
                image = ImageBuffer(np.full((height, width, 3), 128, dtype=np.uint8))
            else:
                rng = np.random.default_rng(1000 + i)
                image = ImageBuffer(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
            box = patchopt.scaled_box(model, i * step)
            x1, y1, x2, y2 = box
            if not (0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height):
                raise ConfigError(
                    f"frames.synthetic: scaled box {box} at frame {i * step} leaves the {width}x{height} canvas"
                )
            frames.append((image, box))
        return frames
    raise ConfigError("frames must be a list of {image, box} or {'synthetic': {...}}")


def _build_detector(config: dict) -> patchopt.ToyDetector:
    det = dict(config.get("detector", {"type": "toy"}))
    allowed = {"type", "seed", "weight_scale", "bias", "smooth_sigma", "ref_height", "ref_width"}
    unknown = set(det) - allowed
    if unknown:
        raise ConfigError(f"detector: unknown key(s): {sorted(unknown)}")
    if det.get("type", "toy") != "toy":
        raise ConfigError("only the built-in 'toy' detector is available")
    return patchopt.ToyDetector(
        seed=int(det.get("seed", 0)),
        ref_shape=(int(det.get("ref_height", 32)), int(det.get("ref_width", 32))),
        weight_scale=float(det.get("weight_scale", 24.0)),
        bias=float(det.get("bias", 2.0)),
        smooth_sigma=float(det.get("smooth_sigma", 2.0)),
    )


def cmd_optimize(args: argparse.Namespace) -> int:
    if args.config is None:
        raise ValueError("optimize needs --config")
    config = _load_config(args.config, _OPTIMIZE_KEYS)
    base_dir = Path(args.config).parent
    iterations = int(config.get("iterations", 0))
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    seed = _resolve_seed(args.seed, config)
    optimizer = config.get("optimizer", "adam")
    weights = patchopt.LossWeights(
        alpha=float(config.get("alpha", 1.0)),
        beta=float(config.get("beta", 0.0)),
        gamma=float(config.get("gamma", 0.0)),
        mu=float(config.get("mu", 0.9)),
        step_size=float(config.get("step_size", 0.01)),
    )
    palette = None
    if config.get("palette") is not None:
        palette = patchopt.load_palette(base_dir / config["palette"])
    state = _build_patch(config)
    frames = _build_frames(config, base_dir)
    detector = _build_detector(config)

    initial_obj = patchopt.mean_objectness(detector, frames, state)
    final_state, trace = patchopt.optimize_patch(
        frames,
        detector,
        weights,
        iterations=iterations,
        seed=seed,
        optimizer=optimizer,
        initial=state,
        tv_mode=config.get("tv_mode", "sqrt"),
        palette=palette,
        noise_amplitude=float(config.get("noise_amplitude", 0.0)),
    )
    final_obj = patchopt.mean_objectness(detector, frames, final_state)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_png_rgb(final_state.to_image(), outdir / "patch.png")
    patchopt.save_trace_csv(trace, outdir / "trace.csv")
    drop = 1.0 - final_obj / initial_obj if initial_obj > 0 else 0.0
    _write_json(
        {
            "initial_objectness": initial_obj,
            "final_objectness": final_obj,
            "objectness_drop": drop,
            "final_loss": trace[-1],
            "iterations": iterations,
            "optimizer": optimizer,
            "seed": seed,
        },
        outdir / "summary.json",
    )
    print(f"objectness {initial_obj:.4f} -> {final_obj:.4f} (drop {100 * drop:.1f}%)")
    print(f"wrote {outdir / 'patch.png'}, {outdir / 'trace.csv'}, {outdir / 'summary.json'}")

    if not args.no_plot:
        from .plots import save_trace_figure

        save_trace_figure(trace, outdir / "trace.png")
        print(f"figure: {outdir / 'trace.png'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aisc", description="Competition numeric core: retrieval, anomaly scoring, track metrics, patch math.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_attr = sub.add_parser("attribute", help="top-k retrieval and precision@5")
    p_attr.add_argument("--probe", required=True)
    p_attr.add_argument("--gallery", required=True)
    p_attr.add_argument("--k", type=int, default=None)
    p_attr.add_argument("--config", default=None)
    p_attr.add_argument("--out", required=True)
    p_attr.add_argument("--no-plot", action="store_true")
    p_attr.set_defaults(func=cmd_attribute)

    p_anom = sub.add_parser("anomaly", help="multi-module anomaly report")
    p_anom.add_argument("--probe", required=True)
    p_anom.add_argument("--gallery", required=True)
    p_anom.add_argument("--config", default=None)
    p_anom.add_argument("--K", type=int, default=None)
    p_anom.add_argument("--k-lof", dest="k_lof", type=int, default=None)
    p_anom.add_argument("--seed", type=int, default=None)
    p_anom.add_argument("--threads", type=int, default=1)
    p_anom.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p_anom.add_argument("--out", required=True)
    p_anom.add_argument("--no-plot", action="store_true")
    p_anom.set_defaults(func=cmd_anomaly)

    p_clu = sub.add_parser("cluster", help="semi-supervised clustering with pseudo-label rounds")
    p_clu.add_argument("--labeled", required=True)
    p_clu.add_argument("--unlabeled", required=True)
    p_clu.add_argument("--k-extra", dest="k_extra", type=int, default=None)
    p_clu.add_argument("--rounds", type=int, default=None)
    p_clu.add_argument("--top-frac", dest="top_frac", type=float, default=None)
    p_clu.add_argument("--min-class-count", dest="min_class_count", type=int, default=None)
    p_clu.add_argument("--min-score", dest="min_score", type=float, default=None)
    p_clu.add_argument("--config", default=None)
    p_clu.add_argument("--seed", type=int, default=None)
    p_clu.add_argument("--out", required=True)
    p_clu.set_defaults(func=cmd_cluster)

    p_score = sub.add_parser("score", help="official track scores")
    p_score.add_argument("--track", choices=("deepfake", "face", "driving", "driving-total"), required=True)
    p_score.add_argument("--precision5", type=float, default=None)
    p_score.add_argument("--auc", type=float, default=None)
    p_score.add_argument("--subjective", type=float, default=None)
    p_score.add_argument("--verdicts", default=None)
    p_score.add_argument("--log", default=None)
    p_score.add_argument("--patch", default=None)
    p_score.add_argument("--area-mode", dest="area_mode", choices=("channel_mean", "channel_sum"), default="channel_mean")
    p_score.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p_score.add_argument("--truck", type=float, default=None)
    p_score.add_argument("--person", type=float, default=None)
    p_score.add_argument("--out", default=None)
    p_score.set_defaults(func=cmd_score)

    p_val = sub.add_parser("validate-patch", help="face-track connected-domain validation")
    p_val.add_argument("--adv", required=True)
    p_val.add_argument("--orig", required=True)
    p_val.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p_val.add_argument("--out", default=None)
    p_val.set_defaults(func=cmd_validate_patch)

    p_opt = sub.add_parser("optimize", help="adversarial patch optimization (toy detector)")
    p_opt.add_argument("--config", required=True)
    p_opt.add_argument("--seed", type=int, default=None)
    p_opt.add_argument("--out", required=True)
    p_opt.add_argument("--no-plot", action="store_true")
    p_opt.set_defaults(func=cmd_optimize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 0
        return EXIT_INPUT_ERROR if code == 2 else code  # usage errors are input errors
    try:
        return args.func(args)
    except VoidResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
