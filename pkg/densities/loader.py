import json
import pathlib

from densities.density import Density, InvalidDensityException
from densities.gaussian_path import GaussianPathDensity, build_gaussian_path
from densities.periodic import make_periodic
from densities.piecewise import make_piecewise
from densities.tabulated import TabulatedDensity
from src.files import read_columns

FAMILIES = ("piecewise", "periodic", "gaussian_path", "tabulated")


def require(spec: dict, *fields: str):
    missing = [f for f in fields if f not in spec]
    if missing:
        raise InvalidDensityException(
            f'{spec.get("family")} density is missing field "{missing[0]}"'
        )
    return [spec[f] for f in fields]


def load_density(spec: dict, base_dir: pathlib.Path | None = None) -> Density:
    if not isinstance(spec, dict):
        raise InvalidDensityException(f"density must be a JSON object, got {type(spec).__name__}")
    family = spec.get("family")

    match family:
        case "piecewise":
            alpha1, alpha2, p, q = require(spec, "alpha1", "alpha2", "p", "q")
            return make_piecewise(alpha1, alpha2, p, q)

        case "periodic":
            (alpha,) = require(spec, "alpha")
            return make_periodic(float(alpha), spec.get("psi", "sine"))

        case "gaussian_path":
            hurst, beta_lil = require(spec, "hurst", "beta_lil")
            if "path" in spec:
                grid, path = require(spec, "grid", "path")
                return GaussianPathDensity(
                    grid, path, float(hurst), float(beta_lil), seed=spec.get("seed")
                )
            grid_size, seed = require(spec, "grid_size", "seed")
            return build_gaussian_path(float(hurst), float(beta_lil), int(grid_size), int(seed))

        case "tabulated":
            if "csv" in spec:
                csv_path = pathlib.Path(spec["csv"])
                if base_dir is not None and not csv_path.is_absolute():
                    csv_path = base_dir / csv_path
                grid, values = read_columns(csv_path, 2)
                return TabulatedDensity(grid, values, source=spec["csv"])
            grid, values = require(spec, "grid", "values")
            return TabulatedDensity(grid, values)

    raise InvalidDensityException(
        f'unknown density family "{family}", expected one of {", ".join(FAMILIES)}'
    )


def read_density(path: str | pathlib.Path) -> Density:
    path = pathlib.Path(path)
    if not path.is_file():
        raise InvalidDensityException(f'density file "{path}" not found')
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidDensityException(f'malformed density JSON in "{path}": {e}') from e
    return load_density(spec, base_dir=path.parent)
