"""Command-line front end.

Subcommands: gen (synthetic token streams), fuse (run the module on a stream
file or a fresh synthetic batch), gradcheck (analytic vs finite-difference
gradients), ablate (structural variants on identical inputs), score (record
files against a benchmark protocol), bench (fuse throughput).

Exit codes: 0 success, 2 usage, 3 invalid input/config/file, 4 failed check.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .fusion import (
    ConfigError,
    FusionConfig,
    FusionToggles,
    fuse,
    init_weights,
    param_count,
    variant_toggles,
    with_toggles,
)
from .gradcheck import check_fuse_gradients
from .metrics import read_records, score_protocol
from .pipeline import synth_tokens
from .serde import (
    load_config,
    load_token_streams,
    load_weights,
    save_container,
    save_token_streams,
    save_weights,
)
from .tensor import TokenTensor

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_CHECK_FAILED = 4

# laptop-scale demo shape: 32 kept frames, 448/14 and 518/14 patch grids,
# widths cut to 64 so a fuse pass stays cheap
DEMO_CONFIG = FusionConfig(n_frames=32, m_visual=1024, m_spatial=1369,
                           d_visual=64, d_spatial=64, d_attn=64, n_heads=8)

TINY_CONFIG = FusionConfig(n_frames=2, m_visual=3, m_spatial=4,
                           d_visual=6, d_spatial=5, d_attn=4, n_heads=2)

GRADCHECK_ENTRY_BUDGET = 50_000


@dataclass(frozen=True)
class RunManifest:
    """Resolved file plan for one fuse run; exactly one input source."""

    config_path: str
    weights_path: str | None
    input_path: str | None
    synthetic_seed: int | None
    output_path: str

    def __post_init__(self):
        sources = (self.input_path is not None) + (self.synthetic_seed is not None)
        if sources != 1:
            raise ValueError("exactly one input source (--in or --seed) is required")


def _apply_toggle_flags(config: FusionConfig, args) -> FusionConfig:
    toggles = FusionToggles(
        geo_bias=config.toggles.geo_bias and not args.no_geo_bias,
        token_weight=config.toggles.token_weight and not args.no_token_weight,
        camera_memory=config.toggles.camera_memory and not args.no_camera_memory,
        gate=config.toggles.gate and not args.no_gate,
    )
    return replace(config, toggles=toggles)


def _add_toggle_flags(parser) -> None:
    parser.add_argument("--no-geo-bias", action="store_true",
                        help="disable the camera-conditioned key/value bias")
    parser.add_argument("--no-token-weight", action="store_true",
                        help="disable per-token importance weighting")
    parser.add_argument("--no-camera-memory", action="store_true",
                        help="drop the camera slot from the attention memory")
    parser.add_argument("--no-gate", action="store_true",
                        help="disable the camera-conditioned output gate")


def _cmd_gen(args) -> int:
    config, seed = load_config(args.config)
    if args.seed is not None:
        seed = args.seed
    inputs = synth_tokens(config, seed, args.distribution)
    save_token_streams(inputs, args.out, meta={"seed": seed, "distribution": args.distribution})
    print(f"wrote {args.out}: visual {inputs.visual.shape}, spatial {inputs.spatial.shape}, "
          f"camera {inputs.camera.shape}, register {inputs.register.shape}")
    return EXIT_OK


def _cmd_fuse(args) -> int:
    manifest = RunManifest(
        config_path=args.config,
        weights_path=args.weights,
        input_path=getattr(args, "in"),
        synthetic_seed=args.seed,
        output_path=args.out,
    )
    config, config_seed = load_config(manifest.config_path)
    config = _apply_toggle_flags(config, args)
    if manifest.weights_path is not None:
        weights = load_weights(manifest.weights_path, config)
    else:
        weights = init_weights(config, config_seed)
    if manifest.input_path is not None:
        inputs, _ = load_token_streams(manifest.input_path)
    else:
        inputs = synth_tokens(config, manifest.synthetic_seed)

    timings: dict[str, float] = {}
    start = time.perf_counter()
    fused = fuse(inputs, weights, config, timings=timings)
    elapsed = time.perf_counter() - start

    save_container(args.out, {"fused": fused.data}, meta={"kind": "fused-tokens"})
    for stage, seconds in timings.items():
        print(f"{stage:>14s}  {seconds * 1e3:9.2f} ms")
    visual_tokens = config.n_frames * config.m_visual
    print(f"{'total':>14s}  {elapsed * 1e3:9.2f} ms   "
          f"({visual_tokens / elapsed:,.0f} visual tokens/s)")
    print(f"wrote {args.out}: fused {fused.shape}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if args.config is not None:
        config, seed = load_config(args.config)
    else:
        config, seed = TINY_CONFIG, 0
    if args.seed is not None:
        seed = args.seed
    config = _apply_toggle_flags(config, args)

    inputs = synth_tokens(config, seed)
    entries = param_count(config) + inputs.visual.data.size \
        + inputs.spatial.data.size + inputs.camera.data.size
    if entries > GRADCHECK_ENTRY_BUDGET:
        print(f"error: config has {entries} checkable entries, over the "
              f"{GRADCHECK_ENTRY_BUDGET} finite-difference budget; "
              f"use smaller dims (the default config works)", file=sys.stderr)
        return EXIT_INVALID

    weights = init_weights(config, seed)
    results = check_fuse_gradients(inputs, weights, config,
                                   corruption=args.self_test_corruption)
    worst = max(results.values())
    for name, err in results.items():
        marker = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name:>20s}  {err:12.3e}  {marker}")
    print(f"{'worst':>20s}  {worst:12.3e}  tolerance {args.tolerance:g}")
    return EXIT_OK if worst <= args.tolerance else EXIT_CHECK_FAILED


def _cmd_ablate(args) -> int:
    config, seed = load_config(args.config)
    if args.seed is not None:
        seed = args.seed
    inputs = synth_tokens(config, seed)
    weights = init_weights(config, seed)

    names = ("shallow", "token-weight", "geo-bias", "full")
    outputs = {}
    for name in names:
        variant = with_toggles(config, variant_toggles(name))
        outputs[name] = fuse(inputs, weights, variant).data
        print(f"{name:>14s}  |out| = {np.linalg.norm(outputs[name]):.6f}")
    print()
    print("max pairwise |difference|:")
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            diff = float(np.max(np.abs(outputs[a] - outputs[b])))
            print(f"{a:>14s} vs {b:<14s} {diff:.6e}")
    return EXIT_OK


def _cmd_score(args) -> int:
    records = read_records(args.records)
    result = score_protocol(records, args.protocol)

    if args.protocol == "spbench":
        print(f"si:      nq {result['si_nq']:.4f}  mcq {result['si_mcq']:.4f}  "
              f"avg {result['si']:.4f}")
        print(f"mv:      nq {result['mv_nq']:.4f}  mcq {result['mv_mcq']:.4f}  "
              f"avg {result['mv']:.4f}")
        print(f"overall: {result['overall']:.4f}")
    else:
        for entry in result["subtasks"]:
            print(f"{entry['subtask']:>20s}  {entry['score']:.4f}  (n={entry['count']})")
        if args.protocol == "sqa3d":
            print(f"{'em@1':>20s}  {result['em_at_1']:.4f}")
            print(f"{'em@r1':>20s}  {result['em_at_r1']:.4f}")
        else:
            print(f"{'average':>20s}  {result['average']:.4f}")
    if result.get("excluded"):
        print(f"excluded for zero ground truth: {result['excluded']}")

    out = args.out if args.out else args.records + ".report.json"
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(result, handle, indent=2)
        handle.write("\n")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.config is not None:
        config, seed = load_config(args.config)
    else:
        config, seed = DEMO_CONFIG, 0
    if args.seed is not None:
        seed = args.seed
    config = _apply_toggle_flags(config, args)
    if args.reps < 1:
        raise ValueError("--reps must be at least 1")

    inputs = synth_tokens(config, seed)
    weights = init_weights(config, seed)
    times = []
    for _ in range(args.reps):
        start = time.perf_counter()
        fuse(inputs, weights, config)
        times.append(time.perf_counter() - start)
    median = float(np.median(times))
    p95 = float(np.percentile(times, 95))
    visual_tokens = config.n_frames * config.m_visual
    print(f"config: frames {config.n_frames}, visual {config.m_visual}x{config.d_visual}, "
          f"spatial {config.m_spatial}x{config.d_spatial}, attn {config.d_attn}/{config.n_heads}h")
    print(f"reps {args.reps}: median {median:.3f} s, p95 {p95:.3f} s, "
          f"{visual_tokens / median:,.0f} visual tokens/s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="camfuse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a seeded synthetic token-stream file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--distribution", choices=("gaussian", "unit_sphere"), default="gaussian")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("fuse", help="fuse a token stream and write the result")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", default=None, help="weights container; default: init from config seed")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--in", dest="in", default=None, help="token-stream container")
    source.add_argument("--seed", type=int, default=None, help="generate synthetic inputs")
    p.add_argument("--out", required=True)
    _add_toggle_flags(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--config", default=None, help="default: a built-in tiny config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--self-test-corruption", type=float, default=0.0,
                   help="add a constant to every analytic gradient; a nonzero "
                        "value must make the check fail (negative control)")
    _add_toggle_flags(p)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("ablate", help="run the structural variants on identical inputs")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("score", help="score a JSON-lines record file")
    p.add_argument("--records", required=True)
    p.add_argument("--protocol", choices=("vsi", "sqa3d", "spbench"), required=True)
    p.add_argument("--out", default=None, help="report path; default <records>.report.json")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("bench", help="fuse throughput over repeated runs")
    p.add_argument("--config", default=None, help="default: the built-in demo config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reps", type=int, default=5)
    _add_toggle_flags(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
