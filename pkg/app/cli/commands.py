import argparse
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import torch
from pydantic import ValidationError

import app
from app.core.config import get_settings
from app.core.exceptions import ConfigError, InvalidArgument, IoError, RXPError
from app.core.seeding import derive_seed
from app.data.csv_io import load_csv, save_csv
from app.data.generator import generate_from_spec
from app.data.scaling import apply_scale
from app.detector.artifact import DetectorArtifact, load_detector, save_detector
from app.evaluation.charts import render_relevance_chart, write_chart
from app.evaluation.experiment import prepare_experiment
from app.evaluation.metrics import precision_recall
from app.evaluation.protocol import ProtocolInputs, run_protocol
from app.evaluation.report import render_table
from app.explain.base import top_k
from app.explain.factory import ExplainerFactory
from app.models.schemas import DatasetSpec, ExplainerMethod, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_IO = 3

SEED_COMPONENTS = ("dataset", "split", "detector.train", "background")


# ============== Config / IO helpers ==============

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def load_run_config(
    path: Optional[str],
    seed: Optional[int] = None,
    out: Optional[str] = None,
    top_k_override: Optional[int] = None
) -> RunConfig:
    """
    Parse a RunConfig JSON file and apply command-line overrides.

    Args:
        path: Config file; None uses the defaults
        seed: Overrides the config seed
        out: Overrides the output directory
        top_k_override: Overrides protocol.top_k

    Returns:
        Validated RunConfig with output_dir always set
    """
    try:
        cfg = RunConfig.model_validate_json(_read_text(path)) if path else RunConfig()
        if seed is not None:
            cfg.seed = seed
        if top_k_override is not None:
            cfg.protocol.top_k = top_k_override
        cfg = RunConfig.model_validate(cfg.model_dump())
    except ValidationError as e:
        raise ConfigError(f"invalid run config: {e}") from e
    cfg.output_dir = out or cfg.output_dir or get_settings().output_dir
    return cfg


def derived_seeds(seed: int) -> Dict[str, int]:
    return {component: derive_seed(seed, component) for component in SEED_COMPONENTS}


def write_manifest(out_dir: Path, command: str, inputs: Dict[str, Any], seeds: Dict[str, int]) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "inputs": inputs,
        "seeds": seeds,
        "versions": {
            "package": app.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "torch": torch.__version__,
            "pandas": pd.__version__,
        },
    }
    return _write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ============== Commands ==============

def cmd_gen_data(spec_path: Optional[str], out_path: str, seed: int) -> Path:
    """Generate a synthetic dataset and write it as CSV."""
    try:
        spec = DatasetSpec.model_validate_json(_read_text(spec_path)) if spec_path else DatasetSpec()
    except ValidationError as e:
        raise ConfigError(f"invalid dataset spec: {e}") from e
    bundle = generate_from_spec(spec, derive_seed(seed, "dataset"))
    out = Path(out_path)
    save_csv(bundle, out)
    write_manifest(
        out.parent,
        "gen-data",
        {"spec": spec_path, "spec_document": spec.model_dump(mode="json"), "out": str(out)},
        {"seed": seed, "dataset": derive_seed(seed, "dataset")}
    )
    return out


def cmd_train(cfg: RunConfig, config_path: Optional[str] = None) -> Path:
    """Train the detector on the training split and write the detector artifact plus a summary."""
    out_dir = Path(cfg.output_dir)
    experiment = prepare_experiment(cfg)
    detector = experiment.detector
    artifact_path = out_dir / "detector.json"
    save_detector(
        DetectorArtifact(
            detector=detector,
            scaler=experiment.scaler,
            stats=experiment.stats,
            background=experiment.background,
            presets=cfg.shap_presets,
            seed=cfg.seed
        ),
        artifact_path
    )

    train_scores = detector.score_batch(experiment.train.data)
    summary: Dict[str, Any] = {
        "threshold_delta": detector.threshold_delta,
        "contamination": detector.contamination,
        "n_train": experiment.train.n_records,
        "n_test": experiment.test.n_records,
        "train_score_mean": float(train_scores.mean()),
        "train_flagged": int(np.count_nonzero(train_scores >= detector.threshold_delta)),
    }
    if experiment.test.n_records:
        _, flags = detector.detect_batch(experiment.test.data)
        summary["test_detection"] = precision_recall(experiment.test.ground_truth.is_fault, flags).model_dump()
    _write_text(out_dir / "training_summary.json", json.dumps(summary, indent=2) + "\n")
    write_manifest(out_dir, "train", {"config": config_path, "run_config": cfg.model_dump(mode="json")}, {
        "seed": cfg.seed, **derived_seeds(cfg.seed)
    })
    return artifact_path


def _scaled_records(artifact: DetectorArtifact, data_path: str) -> np.ndarray:
    bundle = load_csv(data_path, require_ground_truth=False)
    if list(bundle.feature_names) != artifact.detector.feature_names:
        raise InvalidArgument(f"{data_path} columns do not match the detector's features")
    if artifact.scaler is None:
        return bundle.data
    return apply_scale(artifact.scaler, bundle.data)


def cmd_detect(detector_path: str, data_path: str, out_path: str) -> Path:
    """Score every record and write record, score, is_anomaly as CSV."""
    artifact = load_detector(detector_path)
    data = _scaled_records(artifact, data_path)
    scores, flags = artifact.detector.detect_batch(data)
    frame = pd.DataFrame({"record": np.arange(len(scores)), "score": scores, "is_anomaly": flags.astype(np.int64)})
    out = Path(out_path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, float_format="%.17g")
    except OSError as e:
        raise IoError(f"cannot write {out}: {e}") from e
    logger.info(f"Flagged {int(flags.sum())} of {len(flags)} records")
    write_manifest(
        out.parent,
        "detect",
        {"detector": detector_path, "data": data_path, "out": str(out), "flagged": int(flags.sum())},
        {"seed": artifact.seed} if artifact.seed is not None else {}
    )
    return out


def cmd_explain(
    detector_path: str,
    data_path: str,
    record_id: int,
    method: ExplainerMethod,
    out: str,
    seed: Optional[int] = None,
    svg: Optional[str] = None,
    timing: bool = False,
    k: Optional[int] = None
) -> Path:
    """Explain one record with the chosen method and write the Explanation JSON."""
    artifact = load_detector(detector_path)
    data = _scaled_records(artifact, data_path)
    if not 0 <= record_id < len(data):
        raise InvalidArgument(f"record {record_id} outside [0, {len(data)})")

    method = ExplainerMethod(method)
    if method == ExplainerMethod.RXP and artifact.stats is None:
        raise ConfigError("detector artifact carries no residual statistics")
    if method != ExplainerMethod.RXP and artifact.background is None:
        raise ConfigError("detector artifact carries no background rows")

    if seed is None:
        seed = artifact.seed if artifact.seed is not None else get_settings().default_seed
    presets = list(artifact.presets)
    if not presets and artifact.background is not None:
        # older artifacts: defaults capped to the stored rows
        presets = [
            preset.model_copy(update={"n_background": min(preset.n_background, len(artifact.background))})
            for preset in RunConfig().shap_presets
        ]
    explainer = ExplainerFactory.create(
        method,
        artifact.detector,
        stats=artifact.stats,
        presets=presets,
        seed=seed,
        background=artifact.background
    )
    expl = explainer.explain(data[record_id])
    exclude = None if timing else {"elapsed_ns"}
    out_path = _write_text(Path(out), expl.model_dump_json(indent=2, exclude=exclude) + "\n")

    if k is not None:
        names = artifact.detector.feature_names
        for rank, (index, weight) in enumerate(top_k(expl, k), start=1):
            print(f"{rank:>3}  {names[index]:<28} {weight:.6f}")
    if svg:
        chart = render_relevance_chart(
            {method.value: expl}, artifact.detector.feature_names, f"record {record_id}"
        )
        write_chart(chart, Path(svg))
    write_manifest(
        out_path.parent,
        "explain",
        {
            "detector": detector_path,
            "data": data_path,
            "record": record_id,
            "method": method.value,
            "out": str(out_path),
            "svg": svg,
        },
        {"seed": seed}
    )
    return out_path


def cmd_benchmark(cfg: RunConfig, config_path: Optional[str] = None) -> Path:
    """Train, run the resampling protocol, and write the report, table, charts and manifest."""
    out_dir = Path(cfg.output_dir)
    experiment = prepare_experiment(cfg)
    save_detector(
        DetectorArtifact(
            detector=experiment.detector,
            scaler=experiment.scaler,
            stats=experiment.stats,
            background=experiment.background,
            presets=cfg.shap_presets,
            seed=cfg.seed
        ),
        out_dir / "detector.json"
    )

    result = run_protocol(cfg, ProtocolInputs(
        detector=experiment.detector,
        stats=experiment.stats,
        training=experiment.train.data,
        test_data=experiment.test.data,
        test_truth=experiment.test.ground_truth,
        background=experiment.background
    ))
    report_path = _write_text(out_dir / "report.json", result.report.model_dump_json(indent=2) + "\n")
    table = render_table(result.report)
    _write_text(out_dir / "report.txt", table)
    print(table, end="")

    charts: List[str] = []
    for record, explanations in result.charts.items():
        svg = render_relevance_chart(
            explanations,
            experiment.bundle.feature_names,
            f"test record {record}",
            causes=experiment.test.ground_truth.causes[record]
        )
        charts.append(str(write_chart(svg, out_dir / "charts" / f"record_{record}.svg")))

    write_manifest(out_dir, "benchmark", {
        "config": config_path,
        "run_config": cfg.model_dump(mode="json"),
        "charts": charts,
    }, {
        "seed": cfg.seed,
        **derived_seeds(cfg.seed),
        "rounds": result.report.runs.round_seeds,
    })
    return report_path


# ============== Argument parsing ==============

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxp",
        description="Residual explanations for autoencoder anomaly detection, with a Kernel SHAP benchmark."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate a synthetic wayside dataset CSV")
    gen.add_argument("--config", dest="spec", default=None, help="Dataset spec JSON; defaults to the wayside layout")
    gen.add_argument("--out", required=True, help="Destination CSV")
    gen.add_argument("--seed", type=int, default=None, help="Top-level seed")

    train = sub.add_parser("train", help="Train the detector and write detector.json")
    train.add_argument("--config", default=None, help="RunConfig JSON")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", default=None, help="Output directory")

    detect = sub.add_parser("detect", help="Score every record of a CSV")
    detect.add_argument("--detector", required=True)
    detect.add_argument("--data", required=True)
    detect.add_argument("--out", required=True, help="Destination CSV")

    explain = sub.add_parser("explain", help="Explain one record")
    explain.add_argument("--detector", required=True)
    explain.add_argument("--data", required=True)
    explain.add_argument("--record", type=int, required=True, help="Zero-based data row")
    explain.add_argument("--method", choices=[m.value for m in ExplainerMethod], default=ExplainerMethod.RXP.value)
    explain.add_argument("--out", required=True, help="Destination Explanation JSON")
    explain.add_argument("--seed", type=int, default=None, help="Defaults to the training seed stored in the detector")
    explain.add_argument("--top-k", type=int, default=None, help="Print the K most relevant features")
    explain.add_argument("--svg", default=None, help="Also write a bar chart here")
    explain.add_argument("--timing", action="store_true", help="Keep elapsed_ns in the JSON")

    bench = sub.add_parser("benchmark", help="Run the RXP vs SHAP evaluation protocol")
    bench.add_argument("--config", default=None, help="RunConfig JSON")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", default=None, help="Output directory")
    bench.add_argument("--top-k", type=int, default=None, help="MAP cutoff")
    return parser


def _dispatch(args: argparse.Namespace) -> Path:
    if args.command == "gen-data":
        seed = args.seed if args.seed is not None else get_settings().default_seed
        return cmd_gen_data(args.spec, args.out, seed)
    if args.command == "train":
        return cmd_train(load_run_config(args.config, args.seed, args.out), args.config)
    if args.command == "detect":
        return cmd_detect(args.detector, args.data, args.out)
    if args.command == "explain":
        return cmd_explain(
            args.detector,
            args.data,
            args.record,
            ExplainerMethod(args.method),
            args.out,
            seed=args.seed,
            svg=args.svg,
            timing=args.timing,
            k=args.top_k
        )
    cfg = load_run_config(args.config, args.seed, args.out, args.top_k)
    return cmd_benchmark(cfg, args.config)


def _fail(error: Exception, code: int) -> int:
    print(json.dumps({"error": type(error).__name__, "message": str(error)}), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        output = _dispatch(args)
    except ConfigError as e:
        return _fail(e, EXIT_CONFIG)
    except IoError as e:
        return _fail(e, EXIT_IO)
    except RXPError as e:
        logger.error(f"{args.command} failed: {e}")
        return _fail(e, EXIT_ERROR)
    logger.info(f"{args.command} wrote {output}")
    return EXIT_OK
