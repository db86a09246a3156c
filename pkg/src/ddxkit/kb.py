"""Expert-system knowledge base: diseases, findings, and disease-finding frequencies.

The KB document is a JSON object with three arrays:

    {"diseases":    [{"id": "flu", "name": "Influenza"}, ...],
     "findings":    [{"id": "fever", "name": "Fever", "kind": "clinical"},
                     {"id": "male", "name": "Male", "kind": "demographic",
                      "mutex_group": "sex"}, ...],
     "frequencies": [{"disease": "flu", "finding": "fever", "freq": 0.8}, ...]}

A missing (disease, finding) pair means frequency exactly 0. Unknown fields
are rejected. Findings sharing a mutex_group are mutually exclusive in a
patient; every demographic finding must carry one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

DEMOGRAPHIC = "demographic"
CLINICAL = "clinical"
FINDING_KINDS = (DEMOGRAPHIC, CLINICAL)


class KBError(ValueError):
    """Malformed or invariant-violating knowledge base document."""


@dataclass(frozen=True)
class Finding:
    id: str
    display_name: str
    kind: str
    mutex_group: str | None = None


@dataclass(frozen=True)
class Disease:
    id: str
    display_name: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def lines(self) -> list[str]:
        return [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]


@dataclass
class KnowledgeBase:
    """Immutable after construction; safe for concurrent reads."""

    diseases: list[Disease]
    findings: list[Finding]
    frequencies: dict[tuple[str, str], float]
    _disease_ids: frozenset[str] = field(init=False, repr=False, compare=False)
    _findings_by_id: dict[str, Finding] = field(init=False, repr=False, compare=False)
    _sorted_cache: dict[str, list[str]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._disease_ids = frozenset(d.id for d in self.diseases)
        self._findings_by_id = {f.id: f for f in self.findings}
        self._sorted_cache = {}

    def finding(self, fid: str) -> Finding:
        try:
            return self._findings_by_id[fid]
        except KeyError:
            raise KeyError(f"unknown finding id: {fid!r}") from None

    def has_disease(self, did: str) -> bool:
        return did in self._disease_ids

    def has_finding(self, fid: str) -> bool:
        return fid in self._findings_by_id

    def demographic_findings(self) -> list[Finding]:
        """Demographic findings in ascending id order."""
        return sorted((f for f in self.findings if f.kind == DEMOGRAPHIC), key=lambda f: f.id)

    def mutex_group(self, fid: str) -> str | None:
        return self.finding(fid).mutex_group


def frequency(kb: KnowledgeBase, disease_id: str, finding_id: str) -> float:
    """FREQ(d, f) in [0, 1]; 0 when the pair is not stored."""
    if not kb.has_disease(disease_id):
        raise KeyError(f"unknown disease id: {disease_id!r}")
    if not kb.has_finding(finding_id):
        raise KeyError(f"unknown finding id: {finding_id!r}")
    return kb.frequencies.get((disease_id, finding_id), 0.0)


def sorted_findings(kb: KnowledgeBase, disease_id: str) -> list[str]:
    """Clinical finding ids with FREQ(d, f) > 0, by descending frequency.

    Ties break on ascending finding id so the order is total and
    platform-independent. Demographic findings are excluded.
    """
    if not kb.has_disease(disease_id):
        raise KeyError(f"unknown disease id: {disease_id!r}")
    cached = kb._sorted_cache.get(disease_id)
    if cached is not None:
        return list(cached)
    pairs = [
        (fid, q)
        for (did, fid), q in kb.frequencies.items()
        if did == disease_id and q > 0.0 and kb.finding(fid).kind == CLINICAL
    ]
    pairs.sort(key=lambda p: (-p[1], p[0]))
    order = [fid for fid, _ in pairs]
    kb._sorted_cache[disease_id] = order
    return list(order)


def _check_object(obj, allowed: dict[str, type], required: set[str], where: str) -> list[str]:
    errors = []
    if not isinstance(obj, dict):
        return [f"{where}: expected an object, got {type(obj).__name__}"]
    for key in obj:
        if key not in allowed:
            errors.append(f"{where}: unknown field {key!r}")
    for key in required:
        if key not in obj:
            errors.append(f"{where}: missing field {key!r}")
    for key, typ in allowed.items():
        if key in obj and not isinstance(obj[key], typ):
            errors.append(f"{where}: field {key!r} must be {typ.__name__}")
    return errors


def _collect_parts(doc) -> tuple[list[Disease], list[Finding], dict[tuple[str, str], float], list[str]]:
    """Shape-check a decoded document; returns parts plus shape errors."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        return [], [], {}, ["top level: expected an object"]
    for key in doc:
        if key not in ("diseases", "findings", "frequencies"):
            errors.append(f"top level: unknown field {key!r}")
    diseases: list[Disease] = []
    findings: list[Finding] = []
    freqs: dict[tuple[str, str], float] = {}
    zero_keys: set[tuple[str, str]] = set()

    for i, obj in enumerate(doc.get("diseases", [])):
        where = f"diseases[{i}]"
        errs = _check_object(obj, {"id": str, "name": str}, {"id", "name"}, where)
        if errs:
            errors.extend(errs)
            continue
        diseases.append(Disease(id=obj["id"], display_name=obj["name"]))

    for i, obj in enumerate(doc.get("findings", [])):
        where = f"findings[{i}]"
        errs = _check_object(
            obj, {"id": str, "name": str, "kind": str, "mutex_group": str}, {"id", "name", "kind"}, where
        )
        if errs:
            errors.extend(errs)
            continue
        findings.append(
            Finding(id=obj["id"], display_name=obj["name"], kind=obj["kind"], mutex_group=obj.get("mutex_group"))
        )

    for i, obj in enumerate(doc.get("frequencies", [])):
        where = f"frequencies[{i}]"
        errs = _check_object(
            obj, {"disease": str, "finding": str, "freq": (int, float)}, {"disease", "finding", "freq"}, where
        )
        if errs:
            errors.extend(errs)
            continue
        key = (obj["disease"], obj["finding"])
        if key in freqs or key in zero_keys:
            errors.append(f"{where}: duplicate frequency entry for {key}")
            continue
        q = float(obj["freq"])
        if q == 0.0:
            # Zero entries are equivalent to absent ones; check references, drop.
            did, fid = key
            if not any(d.id == did for d in diseases):
                errors.append(f"{where}: unknown disease")
            if not any(f.id == fid for f in findings):
                errors.append(f"{where}: unknown finding")
            zero_keys.add(key)
            continue
        freqs[key] = q

    return diseases, findings, freqs, errors


def validate_knowledge_base(kb: KnowledgeBase, min_clinical_findings: int = 3) -> ValidationReport:
    """Report every violated invariant; empty errors iff the KB is valid.

    Diseases with fewer than `min_clinical_findings` nonzero clinical
    findings draw a warning: the case simulator targets at least five
    elicited findings per case and such diseases yield degenerate cases.
    """
    errors: list[str] = []
    warnings: list[str] = []

    seen_d: set[str] = set()
    for d in kb.diseases:
        if not d.id:
            errors.append("disease with empty id")
        elif d.id in seen_d:
            errors.append(f"duplicate disease id: {d.id!r}")
        seen_d.add(d.id)

    seen_f: set[str] = set()
    for f in kb.findings:
        if not f.id:
            errors.append("finding with empty id")
        elif f.id in seen_f:
            errors.append(f"duplicate finding id: {f.id!r}")
        seen_f.add(f.id)
        if f.kind not in FINDING_KINDS:
            errors.append(f"finding {f.id!r}: kind must be one of {FINDING_KINDS}, got {f.kind!r}")
        if f.kind == DEMOGRAPHIC and not f.mutex_group:
            errors.append(f"finding {f.id!r}: demographic finding without mutex_group")

    for (did, fid), q in kb.frequencies.items():
        where = f"frequency ({did!r}, {fid!r})"
        if did not in seen_d:
            errors.append(f"{where}: unknown disease")
        if fid not in seen_f:
            errors.append(f"{where}: unknown finding")
        if not (0.0 <= q <= 1.0):
            errors.append(f"{where}: frequency out of range [0, 1]: {q}")

    if not errors:
        for d in kb.diseases:
            n = len(sorted_findings(kb, d.id))
            if n < min_clinical_findings:
                warnings.append(
                    f"disease {d.id!r}: insufficient findings for simulation "
                    f"({n} nonzero clinical findings, want >= {min_clinical_findings})"
                )

    return ValidationReport(errors=tuple(errors), warnings=tuple(warnings))


def validate_kb_document(text: str, min_clinical_findings: int = 3) -> ValidationReport:
    """Validate a raw KB document without constructing a KnowledgeBase."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        return ValidationReport(errors=(f"syntax error at line {e.lineno} column {e.colno}: {e.msg}",))
    diseases, findings, freqs, shape_errors = _collect_parts(doc)
    if shape_errors:
        return ValidationReport(errors=tuple(shape_errors))
    kb = KnowledgeBase(diseases=diseases, findings=findings, frequencies=freqs)
    return validate_knowledge_base(kb, min_clinical_findings)


def parse_knowledge_base(text: str) -> KnowledgeBase:
    """Parse and validate a KB document; raises KBError on any violation."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise KBError(f"syntax error at line {e.lineno} column {e.colno}: {e.msg}") from None
    diseases, findings, freqs, shape_errors = _collect_parts(doc)
    if shape_errors:
        raise KBError("; ".join(shape_errors))
    kb = KnowledgeBase(diseases=diseases, findings=findings, frequencies=freqs)
    report = validate_knowledge_base(kb)
    if not report.ok:
        raise KBError("; ".join(report.errors))
    return kb


def serialize_knowledge_base(kb: KnowledgeBase) -> str:
    """Inverse of parse: parse(serialize(kb)) reconstructs kb exactly."""
    doc = {
        "diseases": [{"id": d.id, "name": d.display_name} for d in kb.diseases],
        "findings": [
            {"id": f.id, "name": f.display_name, "kind": f.kind}
            | ({"mutex_group": f.mutex_group} if f.mutex_group is not None else {})
            for f in kb.findings
        ],
        "frequencies": [
            {"disease": did, "finding": fid, "freq": q}
            for (did, fid), q in sorted(kb.frequencies.items())
        ],
    }
    return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"
