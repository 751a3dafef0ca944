"""Electoral universe: political forces, coalitions, voting options and constants.

The catalog is loaded once from a YAML config file and is immutable afterwards,
so it can be shared read-only across parallel workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import yaml


class CatalogError(ValueError):
    """Raised when the catalog configuration is internally inconsistent."""


class ForceKind(str, enum.Enum):
    PARTY = "party"
    INDEPENDENT = "independent"
    NULL_UNREGISTERED = "null_unregistered"
    ABSTENTION = "abstention"


@dataclass(frozen=True)
class PoliticalForce:
    id: str
    kind: ForceKind


@dataclass(frozen=True)
class Coalition:
    id: str
    members: tuple[str, ...]
    # district -> party that takes the seat if the coalition wins there.
    # A district key present here means the coalition registered a candidate.
    seat_agreement: dict[int, str] = field(default_factory=dict)


@dataclass(frozen=True)
class VotingOption:
    id: str
    composition: tuple[str, ...]


@dataclass(frozen=True)
class ElectoralConstants:
    total_seats: int = 500
    majority_seats: int = 300
    pr_seats: int = 200
    seat_cap: int = 300
    overrepresentation_margin: float = 0.08
    threshold: float = 0.03
    max_nominal_list: int = 750

    def __post_init__(self):
        if self.total_seats != self.majority_seats + self.pr_seats:
            raise CatalogError("total_seats must equal majority_seats + pr_seats")
        if not (0 < self.overrepresentation_margin < 1):
            raise CatalogError("overrepresentation_margin must be in (0,1)")
        if not (0 < self.threshold < 1):
            raise CatalogError("threshold must be in (0,1)")


class Catalog:
    """Immutable view of the forces, coalitions and valid voting options.

    Party "registration order" is the order in which forces appear in the
    config; it is the documented tie-break for remainder assignment and
    district-winner ties.
    """

    def __init__(self, forces, coalitions, options, constants=None):
        self.forces: tuple[PoliticalForce, ...] = tuple(forces)
        self.coalitions: tuple[Coalition, ...] = tuple(coalitions)
        self.options: tuple[VotingOption, ...] = tuple(options)
        self.constants = constants or ElectoralConstants()

        self._force_by_id = {f.id: f for f in self.forces}
        self._option_by_id = {o.id: o for o in self.options}
        self._order = {f.id: i for i, f in enumerate(self.forces)}
        self._coalition_by_id = {c.id: c for c in self.coalitions}
        self._validate()

        self.party_ids = tuple(f.id for f in self.forces if f.kind == ForceKind.PARTY)
        self.independent_ids = tuple(
            f.id for f in self.forces if f.kind == ForceKind.INDEPENDENT
        )
        self.null_id = next(
            f.id for f in self.forces if f.kind == ForceKind.NULL_UNREGISTERED
        )
        self.abstention_id = next(
            f.id for f in self.forces if f.kind == ForceKind.ABSTENTION
        )
        # Coalition membership lookup: party id -> coalition (at most one).
        self._coalition_of: dict[str, Coalition] = {}
        for c in self.coalitions:
            for p in c.members:
                self._coalition_of[p] = c
        # Single-party option per party, used as the "individual votes" source.
        self._single_option_of: dict[str, str] = {}
        for o in self.options:
            if len(o.composition) == 1:
                self._single_option_of.setdefault(o.composition[0], o.id)

    # -- validation ---------------------------------------------------------

    def _validate(self):
        ids = [f.id for f in self.forces]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate force ids")
        kinds = [f.kind for f in self.forces]
        if kinds.count(ForceKind.NULL_UNREGISTERED) != 1:
            raise CatalogError("exactly one null_unregistered force required")
        if kinds.count(ForceKind.ABSTENTION) != 1:
            raise CatalogError("exactly one abstention force required")

        seen_members: set[str] = set()
        for c in self.coalitions:
            if len(c.members) < 2:
                raise CatalogError(f"coalition {c.id} needs >= 2 members")
            for p in c.members:
                f = self._force_by_id.get(p)
                if f is None or f.kind != ForceKind.PARTY:
                    raise CatalogError(f"coalition {c.id} member {p} is not a party")
                if p in seen_members:
                    raise CatalogError(f"party {p} belongs to more than one coalition")
                seen_members.add(p)
            for h, p in c.seat_agreement.items():
                if p not in c.members:
                    raise CatalogError(
                        f"seat agreement of {c.id} in district {h} names non-member {p}"
                    )

        opt_ids = [o.id for o in self.options]
        if len(set(opt_ids)) != len(opt_ids):
            raise CatalogError("duplicate option ids")
        for o in self.options:
            if not o.composition:
                raise CatalogError(f"option {o.id} has empty composition")
            unknown = [p for p in o.composition if p not in self._force_by_id]
            if unknown:
                raise CatalogError(f"option {o.id} references unknown force {unknown}")
            if len(o.composition) > 1:
                comp = set(o.composition)
                owners = [
                    c for c in self.coalitions if comp.issubset(set(c.members))
                ]
                if len(owners) != 1:
                    raise CatalogError(
                        f"multi-party option {o.id} must lie within exactly one coalition"
                    )
                for p in o.composition:
                    if self._force_by_id[p].kind != ForceKind.PARTY:
                        raise CatalogError(
                            f"multi-party option {o.id} contains non-party {p}"
                        )

    # -- lookups ------------------------------------------------------------

    def force(self, force_id: str) -> PoliticalForce:
        try:
            return self._force_by_id[force_id]
        except KeyError:
            raise CatalogError(f"unknown force {force_id!r}") from None

    def option(self, option_id: str) -> VotingOption:
        try:
            return self._option_by_id[option_id]
        except KeyError:
            raise CatalogError(f"unknown option {option_id!r}") from None

    def coalition(self, coalition_id: str) -> Coalition:
        return self._coalition_by_id[coalition_id]

    def registration_order(self, force_id: str) -> int:
        return self._order[force_id]

    def coalition_of(self, party_id: str) -> Coalition | None:
        return self._coalition_of.get(party_id)

    def single_option_of(self, party_id: str) -> str | None:
        return self._single_option_of.get(party_id)

    def option_ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.options)

    def force_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.forces)

    # -- vote arithmetic ----------------------------------------------------

    def split_combination_votes(self, option, votes, individual_totals=None):
        """Divide a valid combination's votes equally among its parties.

        The integer remainder goes entirely to the member with the largest
        individual total (ties: earliest registration order).  Single-member
        options pass through unchanged.
        """
        if isinstance(option, str):
            option = self.option(option)
        if votes < 0:
            raise ValueError("votes must be non-negative")
        comp = option.composition
        for p in comp:
            if p not in self._force_by_id:
                raise CatalogError(f"unknown force {p} in option {option.id}")
        if len(comp) == 1:
            return {comp[0]: votes}
        if individual_totals is None:
            individual_totals = {}
        share, rem = divmod(votes, len(comp))
        out = {p: share for p in comp}
        if rem:
            top = max(
                comp,
                key=lambda p: (individual_totals.get(p, 0), -self._order[p]),
            )
            out[top] += rem
        return out

    def coalition_district_total(self, district_totals, coalition) -> int:
        """Sum the votes over every option whose composition lies in the coalition."""
        if isinstance(coalition, str):
            coalition = self.coalition(coalition)
        members = set(coalition.members)
        total = 0
        for opt_id, votes in district_totals.items():
            opt = self.option(opt_id)
            if set(opt.composition).issubset(members):
                total += votes
        return total

    def split_totals_to_forces(self, district_totals):
        """Resolve option-level totals into per-force totals.

        Multi-party options are split with the same district's single-party
        totals as the individual reference.  Abstentions are not represented
        at this level.
        """
        singles: dict[str, int] = {}
        for opt_id, votes in district_totals.items():
            comp = self.option(opt_id).composition
            if len(comp) == 1:
                singles[comp[0]] = singles.get(comp[0], 0) + int(votes)
        out = {f.id: 0 for f in self.forces if f.kind != ForceKind.ABSTENTION}
        for opt_id, votes in district_totals.items():
            for p, share in self.split_combination_votes(
                opt_id, int(votes), singles
            ).items():
                out[p] += share
        return out

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "constants": {
                "total_seats": self.constants.total_seats,
                "majority_seats": self.constants.majority_seats,
                "pr_seats": self.constants.pr_seats,
                "seat_cap": self.constants.seat_cap,
                "overrepresentation_margin": self.constants.overrepresentation_margin,
                "threshold": self.constants.threshold,
                "max_nominal_list": self.constants.max_nominal_list,
            },
            "forces": [{"id": f.id, "kind": f.kind.value} for f in self.forces],
            "coalitions": [
                {
                    "id": c.id,
                    "members": list(c.members),
                    "seat_agreement": {str(h): p for h, p in c.seat_agreement.items()},
                }
                for c in self.coalitions
            ],
            "options": [
                {"id": o.id, "composition": list(o.composition)} for o in self.options
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Catalog":
        try:
            constants = ElectoralConstants(**data.get("constants", {}))
            forces = [
                PoliticalForce(f["id"], ForceKind(f["kind"])) for f in data["forces"]
            ]
            coalitions = [
                Coalition(
                    c["id"],
                    tuple(c["members"]),
                    {int(h): p for h, p in c.get("seat_agreement", {}).items()},
                )
                for c in data.get("coalitions", [])
            ]
            options = [
                VotingOption(o["id"], tuple(o["composition"])) for o in data["options"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"malformed catalog data: {exc!r}") from exc
        return cls(forces, coalitions, options, constants)

    @classmethod
    def from_yaml(cls, path) -> "Catalog":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_yaml(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)
