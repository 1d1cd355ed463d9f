import logging
import os
from typing import Any, Dict, List

from pythoncommons.file_utils import FileUtils, JsonFileUtils

from crgaussmap.common import ComponentRole, DenominatorVanishesError, MapModel, MapValidationError
from crgaussmap.cr_models import CRMap
from crgaussmap.exact_algebra import ZERO, MPoly, RFunc, VarAlphabet
from crgaussmap.utils import FractionUtils, LoggingUtils

LOG = logging.getLogger(__name__)

REQUIRED_FIELDS = ["model", "n", "N", "components"]


def _require_int(data: Dict[str, Any], key: str) -> int:
    value = data[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise MapValidationError(f"{key}: expected an integer, got: {value!r}")
    return value


def _parse_terms(terms: Any, alphabet: VarAlphabet, path: str) -> MPoly:
    if not isinstance(terms, list):
        raise MapValidationError(f"{path}: expected a list of terms, got: {type(terms).__name__}")
    n_holo = alphabet.n_holo
    collected = {}
    for idx, term in enumerate(terms):
        term_path = f"{path}[{idx}]"
        if not isinstance(term, dict) or "coeff" not in term or "exps" not in term:
            raise MapValidationError(f"{term_path}: expected an object with 'coeff' and 'exps'")
        try:
            coeff = FractionUtils.parse_exact_pair(term["coeff"])
        except ValueError as e:
            raise MapValidationError(f"{term_path}.coeff: {e}") from e
        exps = term["exps"]
        if not isinstance(exps, list) or len(exps) != n_holo:
            raise MapValidationError(f"{term_path}.exps: expected {n_holo} exponents (z1..z{n_holo - 1}, w)")
        if any(not isinstance(e, int) or isinstance(e, bool) or e < 0 for e in exps):
            raise MapValidationError(f"{term_path}.exps: exponents must be non-negative integers, got: {exps}")
        monom = tuple(exps) + (0,) * alphabet.n_anti
        collected[monom] = collected.get(monom, ZERO) + coeff
    return MPoly.from_terms(alphabet, collected)


def parse_map(data: Any, name: str = "") -> CRMap:
    """CRMap from the JSON document structure; error messages name the offending field."""
    if not isinstance(data, dict):
        raise MapValidationError(f"Map document must be an object, got: {type(data).__name__}")
    missing = [key for key in REQUIRED_FIELDS if key not in data]
    if missing:
        raise MapValidationError(f"Missing required fields: {missing}")
    if not isinstance(data["model"], str):
        raise MapValidationError(f"model: expected a string, got: {data['model']!r}")
    model = MapModel.from_str(data["model"])
    n, N = _require_int(data, "n"), _require_int(data, "N")
    if not N >= n >= 2:
        raise MapValidationError(f"n, N: expected N >= n >= 2, got n={n}, N={N}")
    components = data["components"]
    if not isinstance(components, list) or len(components) != N:
        raise MapValidationError(f"components: expected a list of {N} components")

    alphabet = VarAlphabet.of(n)
    expected_roles = [ComponentRole.F] * (n - 1) + [ComponentRole.PHI] * (N - n) + [ComponentRole.G]
    funcs: List[RFunc] = []
    for idx, (comp, role) in enumerate(zip(components, expected_roles)):
        path = f"components[{idx}]"
        if not isinstance(comp, dict) or "num" not in comp:
            raise MapValidationError(f"{path}: expected an object with at least 'num'")
        if "role" in comp and comp["role"] != role.value:
            raise MapValidationError(f"{path}.role: expected '{role.value}', got: {comp['role']!r}")
        num = _parse_terms(comp["num"], alphabet, f"{path}.num")
        den = _parse_terms(comp["den"], alphabet, f"{path}.den") if "den" in comp else MPoly.one(alphabet)
        if den.is_zero():
            raise MapValidationError(f"{path}.den: denominator is identically zero")
        try:
            funcs.append(RFunc(num, den))
        except DenominatorVanishesError as e:
            raise DenominatorVanishesError(f"{path}.den: {e}") from e
    return CRMap(n, N, model, funcs, name=name)


def load_map(path: str) -> CRMap:
    if not FileUtils.does_file_exist(path):
        raise MapValidationError(f"Map file does not exist: {path}")
    try:
        data, bytes_read = JsonFileUtils.load_data_from_json_file(path)
    except ValueError as e:
        raise MapValidationError(f"Map file is not valid JSON: {path} ({e})") from e
    LOG.debug("Read %d bytes from map file %s", bytes_read, path)
    return parse_map(data, name=os.path.splitext(os.path.basename(path))[0])


def _terms_to_list(poly: MPoly) -> List[Dict[str, Any]]:
    n_holo = poly.alphabet.n_holo
    terms = [
        {"coeff": FractionUtils.format_exact(coeff), "exps": list(monom[:n_holo])}
        for monom, coeff in poly.items()
        if coeff
    ]
    return sorted(terms, key=lambda t: t["exps"])


def map_to_dict(F: CRMap) -> Dict[str, Any]:
    components = []
    for role, comp in zip(F.roles, F.components):
        entry = {"role": role.value, "num": _terms_to_list(comp.num)}
        if not comp.is_polynomial():
            entry["den"] = _terms_to_list(comp.den)
        components.append(entry)
    return {"model": F.model.model_name, "n": F.n, "N": F.N, "components": components}


def _write_json(data: Dict[str, Any], path: str):
    parent = FileUtils.get_parent_dir_name(path)
    if parent:
        FileUtils.ensure_dir_created(parent)
    LoggingUtils.ensure_trace_level()
    bytes_written = JsonFileUtils.write_data_to_file_as_json(path, data, pretty=True)
    LOG.info("Wrote %d bytes to %s", bytes_written, path)


def save_map(F: CRMap, path: str):
    _write_json(map_to_dict(F), path)


def save_report(report: Dict[str, Any], path: str):
    _write_json(report, path)
