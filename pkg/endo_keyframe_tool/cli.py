"""
Command line for the Endo Key-frame Tool.

    python -m endo_keyframe_tool select --input frames/ --out out/ --policy top_k --k 5
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from endo_keyframe_tool import __version__
from endo_keyframe_tool.engine.dispatcher import dispatch
from endo_keyframe_tool.engine.errors import ToolError

logger = logging.getLogger(__name__)

COMMANDS = ["score", "select", "depth-eval", "localize", "eval-iou", "table"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endo_keyframe_tool",
        description="Key-frame selection, depth-map metrics and polyp localization for endoscopy sequences",
    )
    parser.add_argument("command", choices=COMMANDS, help="Task to run")
    parser.add_argument("--input", help="Frame directory or glob (score, select); sequence root (table)")
    parser.add_argument("--depth", help="Depth-map directory (.pfm or 16-bit .png); predictions for depth-eval")
    parser.add_argument("--truth", help="Ground-truth masks (eval-iou) or ground-truth depth maps (depth-eval)")
    parser.add_argument("--config", help="YAML or JSON config file with flat RunConfig keys")
    parser.add_argument("--out", default="out", help="Output directory (default: out)")
    parser.add_argument("--policy", choices=["quantile", "top_k", "absolute"], help="Key-frame selection policy")
    parser.add_argument("--q", type=float, help="Quantile for the quantile policy, in (0, 1)")
    parser.add_argument("--k", type=int, help="Number of frames for the top_k policy")
    parser.add_argument("--threshold", type=float, help="Fused-score cut for the absolute policy")
    parser.add_argument("--workers", type=int, help="Worker threads for per-frame work")
    parser.add_argument("--save-edges", action="store_true", help="Also write raw edges and refined boundaries")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def settings_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """RunConfig overrides from flags; a lone --k or --threshold implies its policy."""
    policy = args.policy
    if policy is None:
        if args.k is not None:
            policy = "top_k"
        elif args.threshold is not None:
            policy = "absolute"
        elif args.q is not None:
            policy = "quantile"
    settings = {
        "policy": policy,
        "q": args.q,
        "k": args.k,
        "threshold": args.threshold,
        "workers": args.workers,
    }
    return {key: value for key, value in settings.items() if value is not None}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    data = {
        "input": args.input,
        "depth": args.depth,
        "truth": args.truth,
        "config": args.config,
        "out": args.out,
        "save_edges": args.save_edges,
    }

    try:
        dispatch(args.command, data, settings_from_args(args))
    except ToolError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0
