import random
from dataclasses import replace
from fractions import Fraction

import pytest

from ctxspl import fixtures
from ctxspl.context import ContextObservation
from ctxspl.cscafm import (
    ServiceOffer,
    aggregate_required_qoc,
    annotate_service,
    calculate_min_qoc_required,
    check_offer,
    check_resources,
    derive,
    load_offers,
    required_qoc,
    resource_demand,
    total_cost,
    validate_offer,
)
from ctxspl.errors import InvalidOfferError, NoMatchingServiceError, QocUnsatisfiableError
from ctxspl.fmxml import serialize_feature_model
from ctxspl.model import (
    Configuration,
    Feature,
    FeatureModel,
    PropertyTriple,
    RequirementTriple,
    canonical_key,
    enumerate_products,
    resolve_requirements,
)
from genmodels import qoc_oracle, random_model, with_costs

BARE_CONTEXT = FeatureModel("Ctx", Feature("Ctx"))

CASE_REQS = [
    RequirementTriple("MachineSeize", "Small"),
    RequirementTriple("Authentication", "OAuth"),
    RequirementTriple("Geolocation", "Europe"),
]


@pytest.fixture(scope="module")
def csc():
    return fixtures.csc_spl()


@pytest.fixture(scope="module")
def cc():
    return fixtures.cc_spl()


def offer(model, provider="p", sid=None):
    return ServiceOffer(sid or model.name, provider, model)


def renamed(fm, name):
    return replace(fm, name=name)


def exhaustive(offers, reqs, threshold=0):
    """Best (cost, key, service_id) over every enumerated product of every offer."""
    best = None
    for o in offers:
        try:
            partial = resolve_requirements(o.model, reqs)
        except Exception:
            continue
        if o.qoc_capacity < max(required_qoc(o.model), Fraction(threshold)):
            continue
        for p in enumerate_products(o.model):
            if partial.selected <= p.selected:
                key = (total_cost(o.model, p), canonical_key(p), o.service_id)
                best = key if best is None or key < best else best
    return best


class TestQocAggregation:
    def test_min_qoc_read(self):
        assert calculate_min_qoc_required(Feature("A", attributes={"min_qoc": "0.4"})) == Fraction(2, 5)
        assert calculate_min_qoc_required(Feature("A")) == 0

    def test_leaf(self):
        assert aggregate_required_qoc(Feature("A")).required_qoc == 0

    def test_sum_of_mandatory_children(self):
        f = Feature(
            "P",
            children=(
                Feature("A", mandatory=True, attributes={"min_qoc": "0.3"}),
                Feature("B", mandatory=True, attributes={"min_qoc": "0.5"}),
            ),
        )
        assert aggregate_required_qoc(f).required_qoc == Fraction(4, 5)

    def test_depth_three_golden(self):
        b = Feature("B", mandatory=True, attributes={"min_qoc": "0.1"})
        a = Feature("A", mandatory=True, attributes={"min_qoc": "0.2"}, children=(b,))
        root = aggregate_required_qoc(Feature("R", children=(a,)))
        assert root.required_qoc == Fraction(3, 10)
        assert root.children[0].required_qoc == Fraction(1, 10)

    def test_optional_and_group_children_contribute_zero(self):
        f = Feature(
            "P",
            children=(Feature("A", attributes={"min_qoc": "0.3"}), Feature("B", mandatory=True)),
        )
        assert aggregate_required_qoc(f).required_qoc == 0
        g = Feature("G", group="alternative", children=(Feature("X", attributes={"min_qoc": 1}), Feature("Y")))
        assert aggregate_required_qoc(g).required_qoc == 0

    def test_case_study_annotation(self, csc):
        by_name = {a.name: a.required_qoc for a in annotate_service(csc)}
        assert by_name["QoC"] == Fraction(1, 2)
        assert required_qoc(csc) == Fraction(1, 2)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_trees_match_oracle(self, seed):
        fm = random_model(random.Random(seed), max_features=20, rich=True)
        expected = qoc_oracle(fm.root)

        def check(a):
            assert a.required_qoc == expected[a.name]
            for c in a.children:
                check(c)

        check(aggregate_required_qoc(fm.root))

    def test_bounds_and_monotonicity(self):
        rng = random.Random(11)
        for _ in range(100):
            fm = random_model(rng, max_features=12, rich=True)
            root = aggregate_required_qoc(fm.root)
            total = sum((f.attributes.get("min_qoc", Fraction(0)) for f in fm.features()), Fraction(0))
            assert 0 <= root.required_qoc <= total
            extra = Feature("Extra", mandatory=True, attributes={"min_qoc": "0.1"})
            grown = replace(fm.root, group="and", children=fm.root.children + (extra,))
            assert aggregate_required_qoc(grown).required_qoc >= root.required_qoc


class TestDerive:
    def test_case_study(self, cc, csc):
        observations = [ContextObservation("Geolocation", "Europe"), ContextObservation("Security", "OAuth")]
        result = derive(cc, observations, [offer(csc, "cloudA")], CASE_REQS)
        assert {"Small", "Europe", "OAuth"} <= result.configuration.selected
        assert set(result.bound_properties) == {
            PropertyTriple("unit", "string", "Euro/hour"),
            PropertyTriple("ram", "string", "SmallRam"),
        }
        assert result.total_cost == total_cost(csc, result.configuration)
        assert result.achieved_qoc == Fraction(9, 10)

    def test_context_drives_location(self, cc, csc):
        result = derive(cc, [ContextObservation("Geolocation", "Asia")], [offer(csc)], [])
        assert "Asia" in result.configuration
        assert PropertyTriple("unit", "string", "Yen/hour") in result.bound_properties

    def test_explicit_requirement_beats_context(self, cc, csc):
        reqs = [RequirementTriple("Geolocation", "America")]
        result = derive(cc, [ContextObservation("Geolocation", "Asia")], [offer(csc)], reqs)
        assert "America" in result.configuration and "Asia" not in result.configuration

    def test_single_offer_no_requirements(self, csc):
        result = derive(BARE_CONTEXT, [], [offer(csc)], [])
        cheapest = min(enumerate_products(csc), key=lambda p: (total_cost(csc, p), canonical_key(p)))
        assert result.configuration == cheapest

    def test_cost_five_beats_seven(self):
        def model(name, cost):
            return FeatureModel(name, Feature(name, children=(Feature("A", mandatory=True, attributes={"cost": cost}),)))

        offers = [offer(model("S7", 7), "p1"), offer(model("S5", 5), "p2")]
        result = derive(BARE_CONTEXT, [], offers, [])
        assert result.service_id == "S5" and result.total_cost == 5
        assert exhaustive(offers, [])[0] == 5

    def test_tie_breaks_on_service_id(self, csc):
        offers = [offer(renamed(csc, "Zeta"), "p1"), offer(renamed(csc, "Alpha"), "p2")]
        assert derive(BARE_CONTEXT, [], offers, CASE_REQS).service_id == "Alpha"

    def test_no_matching_service(self, csc):
        with pytest.raises(NoMatchingServiceError):
            derive(BARE_CONTEXT, [], [offer(csc)], [RequirementTriple("MachineSeize", "Huge")])
        with pytest.raises(NoMatchingServiceError):
            derive(BARE_CONTEXT, [], [], [])
        # Password excludes Encryption: unsatisfiable together
        reqs = [RequirementTriple("Authentication", "Password"), RequirementTriple("Security", "Encryption")]
        with pytest.raises(NoMatchingServiceError):
            derive(BARE_CONTEXT, [], [offer(csc)], reqs)

    def test_qoc_gate(self, csc):
        with pytest.raises(QocUnsatisfiableError):
            derive(BARE_CONTEXT, [], [offer(csc)], [], qoc_threshold=Fraction(95, 100))
        assert derive(BARE_CONTEXT, [], [offer(csc)], [], qoc_threshold=Fraction(9, 10))

    def test_capacity_below_own_requirement(self, csc):
        weak = replace(csc, root=replace(csc.root, attributes={**csc.root.attributes, "qoc_capacity": Fraction(2, 5)}))
        with pytest.raises(QocUnsatisfiableError):
            derive(BARE_CONTEXT, [], [offer(weak)], [])

    def test_argmin_against_exhaustive_search(self):
        rng = random.Random(5)
        checked = 0
        for _ in range(60):
            offers = []
            for i in range(rng.randint(1, 3)):
                fm = with_costs(random_model(rng, max_features=8, max_constraints=2), rng)
                offers.append(offer(renamed(fm, f"S{i}"), f"p{i}"))
            names = [f for f in offers[0].model.features() if f.children]
            reqs = []
            if names and rng.random() < 0.5:
                parent = rng.choice(names)
                reqs = [RequirementTriple(parent.name, rng.choice(parent.children).name)]
            expected = exhaustive(offers, reqs)
            if expected is None:
                with pytest.raises(NoMatchingServiceError):
                    derive(BARE_CONTEXT, [], offers, reqs)
                continue
            result = derive(BARE_CONTEXT, [], offers, reqs)
            assert (result.total_cost, canonical_key(result.configuration), result.service_id) == expected
            assert derive(BARE_CONTEXT, [], offers, reqs) == result
            checked += 1
        assert checked > 20

    def test_cost_scaling_keeps_winner(self):
        for seed in range(30):
            fm = random_model(random.Random(seed), max_features=8)
            plain = offer(with_costs(fm, random.Random(seed)))
            scaled = offer(with_costs(fm, random.Random(seed), scale=3))
            try:
                a = derive(BARE_CONTEXT, [], [plain], [])
            except NoMatchingServiceError:
                continue
            b = derive(BARE_CONTEXT, [], [scaled], [])
            assert a.configuration == b.configuration and b.total_cost == 3 * a.total_cost


class TestResources:
    def test_examples(self):
        fm = FeatureModel("S", Feature("S", children=(Feature("A", mandatory=True, attributes={"ram_gb": 2}),)))
        big = FeatureModel("S", Feature("S", children=(Feature("A", mandatory=True, attributes={"ram_gb": 8}),)))
        cfg = Configuration(frozenset({"S", "A"}))
        assert check_resources(offer(fm), cfg, {"ram_gb": Fraction(4)})
        assert not check_resources(offer(big), cfg, {"ram_gb": Fraction(4)})
        assert check_resources(offer(fm), cfg, {})

    def test_case_study_demand(self, csc):
        result = derive(BARE_CONTEXT, [], [offer(csc)], CASE_REQS)
        demand = resource_demand(csc, result.configuration)
        assert demand["ram_gb"] == 2


class TestOffers:
    def test_root_attributes(self, csc):
        o = offer(csc)
        assert (o.qoc_capacity, o.qos_level, o.response_time, o.cost) == (Fraction(9, 10), Fraction(19, 20), 120, 0)

    def test_negative_cost_rejected(self):
        fm = FeatureModel("S", Feature("S", attributes={"cost": -1}))
        assert validate_offer(offer(fm))
        with pytest.raises(InvalidOfferError):
            check_offer(offer(fm))

    def test_qos_level_range(self):
        fm = FeatureModel("S", Feature("S", attributes={"qos_level": 2}))
        with pytest.raises(InvalidOfferError):
            check_offer(offer(fm))

    def test_load_offers(self, tmp_path, csc):
        (tmp_path / "east").mkdir()
        (tmp_path / "east" / "a.fm.xml").write_bytes(serialize_feature_model(renamed(csc, "East")))
        (tmp_path / "West.fm.xml").write_bytes(serialize_feature_model(renamed(csc, "West")))
        offers = load_offers(tmp_path)
        assert [(o.service_id, o.provider_id) for o in offers] == [("West", "West"), ("East", "east")]

    def test_load_offers_duplicate_ids(self, tmp_path, csc):
        for p in ("a", "b"):
            (tmp_path / p).mkdir()
            (tmp_path / p / "s.fm.xml").write_bytes(serialize_feature_model(csc))
        with pytest.raises(InvalidOfferError):
            load_offers(tmp_path)
