import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict

from iganet.config import RunConfig
from iganet.errors import ConfigError
from iganet.geometry import make_spheroid, make_unit_sphere, save_geometry, surface_area

logger = logging.getLogger(__name__)

KINDS = ("sphere", "spheroid")


def register(subparsers) -> None:
    parser = subparsers.add_parser("geometry", help="write a sphere or spheroid geometry file")
    parser.add_argument("kind", help="sphere or spheroid")
    parser.add_argument("--r-semi", type=float, default=None, help="semi-axis along z (spheroid only)")
    parser.add_argument("--out", default=None, help="output JSON path")
    parser.set_defaults(handler=cmd_geometry)


async def cmd_geometry(args: Namespace, data: Dict[str, Any]) -> Path:
    config: RunConfig = data["config"]
    if args.kind not in KINDS:
        raise ConfigError(f"unknown geometry kind {args.kind!r}; expected one of {KINDS}")

    if args.kind == "sphere":
        surface = make_unit_sphere()
        r_semi = 1.0
    else:
        if args.r_semi is None:
            raise ConfigError("spheroid needs --r-semi")
        r_semi = args.r_semi
        surface = make_spheroid(r_semi)

    out = Path(args.out) if args.out else Path(config.paths.output_dir) / f"{args.kind}.json"
    metadata = {"kind": args.kind, "r_semi": r_semi, **config.provenance()}
    path = save_geometry(surface, out, metadata)
    logger.info(
        "Wrote %s with %d patches, area %.12f", path, surface.num_patches, surface_area(surface)
    )
    return path
