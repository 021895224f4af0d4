"""Simulated external world: land registry, appraisals, comparable sales and
an identity/KYC/AML database, each a deterministic lookup table.

Every table may have an optional second source so that governance can
cross-check a finding against an independent feed.  ``inject_fault`` is the
switchboard scenarios use to plant fraud.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional


@dataclass(frozen=True)
class RegistryRecord:
    asset_id: str
    legal_owner: Optional[str] = None
    liens: int = 0
    exists: bool = False

    def __post_init__(self) -> None:
        if self.liens < 0:
            raise ValueError("liens must be non-negative")


@dataclass(frozen=True)
class AppraisalDoc:
    asset_id: str
    declared_value: int
    issued_months_ago: int = 0
    appraiser_signature_valid: bool = True

    def __post_init__(self) -> None:
        if self.issued_months_ago < 0:
            raise ValueError("issued_months_ago must be non-negative")


@dataclass(frozen=True)
class ComparableSale:
    unit_price: int
    size: int
    months_ago: int = 0

    def __post_init__(self) -> None:
        if self.unit_price <= 0 or self.size <= 0:
            raise ValueError("comparable unit_price and size must be positive")


@dataclass(frozen=True)
class IdentityProfile:
    identity_id: str
    kyc_passed: bool = False
    accredited: bool = False
    aml_flagged: bool = False


FAULT_KINDS = (
    "liened_title",
    "owner_mismatch",
    "forged_appraisal",
    "invalid_signature",
    "stale_appraisal",
    "aml_flag",
    "kyc_fail",
)


class OracleSim:
    """Lookup-table oracles.

    Queries are pure functions of the loaded tables.  The tables only change
    through ``inject_fault`` and ``update_appraisal``, which the harness calls
    from its single event loop.
    """

    def __init__(
        self,
        registry: Mapping[str, RegistryRecord] | None = None,
        appraisals: Mapping[str, AppraisalDoc] | None = None,
        comparables: Mapping[str, list[ComparableSale]] | None = None,
        identities: Mapping[str, IdentityProfile] | None = None,
        *,
        registry_second: Mapping[str, RegistryRecord] | None = None,
        identities_second: Mapping[str, IdentityProfile] | None = None,
    ) -> None:
        self._registry = dict(registry or {})
        self._appraisals = dict(appraisals or {})
        self._comparables = {k: list(v) for k, v in (comparables or {}).items()}
        self._identities = dict(identities or {})
        self._registry_second = dict(registry_second) if registry_second is not None else None
        self._identities_second = dict(identities_second) if identities_second is not None else None

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> OracleSim:
        """Build from the ``oracles:`` section of a scenario file."""

        def registry_table(raw: Mapping[str, Any]) -> dict[str, RegistryRecord]:
            return {
                aid: RegistryRecord(
                    asset_id=aid,
                    legal_owner=rec.get("legal_owner"),
                    liens=int(rec.get("liens", 0)),
                    exists=bool(rec.get("exists", True)),
                )
                for aid, rec in raw.items()
            }

        def identity_table(raw: Mapping[str, Any]) -> dict[str, IdentityProfile]:
            return {
                iid: IdentityProfile(
                    identity_id=iid,
                    kyc_passed=bool(rec.get("kyc_passed", False)),
                    accredited=bool(rec.get("accredited", False)),
                    aml_flagged=bool(rec.get("aml_flagged", False)),
                )
                for iid, rec in raw.items()
            }

        appraisals = {
            aid: AppraisalDoc(
                asset_id=aid,
                declared_value=int(rec["declared_value"]),
                issued_months_ago=int(rec.get("issued_months_ago", 0)),
                appraiser_signature_valid=bool(rec.get("appraiser_signature_valid", True)),
            )
            for aid, rec in (cfg.get("appraisals") or {}).items()
        }
        comparables = {
            aid: [
                ComparableSale(int(c["unit_price"]), int(c["size"]), int(c.get("months_ago", 0)))
                for c in rows or []
            ]
            for aid, rows in (cfg.get("comparables") or {}).items()
        }
        second_reg = cfg.get("registry_second_source")
        second_id = cfg.get("identities_second_source")
        return cls(
            registry=registry_table(cfg.get("registry") or {}),
            appraisals=appraisals,
            comparables=comparables,
            identities=identity_table(cfg.get("identities") or {}),
            registry_second=registry_table(second_reg) if second_reg is not None else None,
            identities_second=identity_table(second_id) if second_id is not None else None,
        )

    # -- queries ---------------------------------------------------------------

    def query_registry(self, asset_id: str) -> RegistryRecord:
        return self._registry.get(asset_id, RegistryRecord(asset_id=asset_id))

    def query_registry_second(self, asset_id: str) -> Optional[RegistryRecord]:
        """Independent registry feed, or None when no second source is configured."""
        if self._registry_second is None:
            return None
        return self._registry_second.get(asset_id, RegistryRecord(asset_id=asset_id))

    def fetch_appraisal(self, asset_id: str) -> Optional[AppraisalDoc]:
        return self._appraisals.get(asset_id)

    def fetch_comparables(self, asset_id: str) -> list[ComparableSale]:
        return list(self._comparables.get(asset_id, ()))

    def check_identity(self, identity_id: str) -> IdentityProfile:
        return self._identities.get(identity_id, IdentityProfile(identity_id=identity_id))

    def check_identity_second(self, identity_id: str) -> Optional[IdentityProfile]:
        if self._identities_second is None:
            return None
        return self._identities_second.get(identity_id, IdentityProfile(identity_id=identity_id))

    def knows_identity(self, identity_id: str) -> bool:
        return identity_id in self._identities

    # -- world changes -----------------------------------------------------------

    def update_appraisal(self, asset_id: str, **fields: Any) -> AppraisalDoc:
        """Replace (or create) the appraisal on file, e.g. after a re-appraisal."""
        current = self._appraisals.get(asset_id)
        if current is None:
            doc = AppraisalDoc(asset_id=asset_id, **fields)
        else:
            doc = replace(current, **fields)
        self._appraisals[asset_id] = doc
        return doc

    def inject_fault(self, kind: str, **kw: Any) -> None:
        """Plant a fault in the primary tables.

        ``liened_title`` (asset_id, liens=1), ``owner_mismatch`` (asset_id,
        owner), ``forged_appraisal`` (asset_id, declared_value),
        ``invalid_signature`` (asset_id), ``stale_appraisal`` (asset_id,
        months), ``aml_flag`` (identity), ``kyc_fail`` (identity).
        """
        if kind == "liened_title":
            rec = self.query_registry(kw["asset_id"])
            self._registry[rec.asset_id] = replace(rec, liens=int(kw.get("liens", 1)))
        elif kind == "owner_mismatch":
            rec = self.query_registry(kw["asset_id"])
            self._registry[rec.asset_id] = replace(rec, legal_owner=kw["owner"])
        elif kind == "forged_appraisal":
            self.update_appraisal(kw["asset_id"], declared_value=int(kw["declared_value"]))
        elif kind == "invalid_signature":
            self.update_appraisal(kw["asset_id"], appraiser_signature_valid=False)
        elif kind == "stale_appraisal":
            self.update_appraisal(kw["asset_id"], issued_months_ago=int(kw["months"]))
        elif kind == "aml_flag":
            prof = self.check_identity(kw["identity"])
            self._identities[prof.identity_id] = replace(prof, aml_flagged=True)
        elif kind == "kyc_fail":
            prof = self.check_identity(kw["identity"])
            self._identities[prof.identity_id] = replace(prof, kyc_passed=False)
        else:
            raise ValueError(f"unknown fault kind {kind!r}; expected one of {FAULT_KINDS}")

    def snapshot(self) -> OracleSim:
        """Deep copy for read-only use elsewhere."""
        return copy.deepcopy(self)
