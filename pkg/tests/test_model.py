import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxspl import fixtures
from ctxspl.errors import NoSuchFeatureError, NoSuchValueError, TooLargeError, UnknownFeatureError
from ctxspl.model import (
    Configuration,
    CrossTreeConstraint,
    Feature,
    FeatureModel,
    ModelError,
    RequirementTriple,
    complete_configuration,
    count_products,
    enumerate_products,
    format_number,
    is_valid_configuration,
    resolve_requirements,
    validate_model,
)
from genmodels import brute_force_products, random_model


def cfg(*names):
    return Configuration(frozenset(names))


def model(*children, group="and", constraints=()):
    return FeatureModel("M", Feature("R", group=group, children=children), constraints)


def chain(depth):
    f = Feature(f"L{depth}")
    for i in reversed(range(1, depth)):
        f = Feature(f"L{i}", children=(f,))
    return model(f)


@pytest.fixture(scope="module")
def cc():
    return fixtures.cc_spl()


@pytest.fixture(scope="module")
def csc():
    return fixtures.csc_spl()


class TestValidateModel:
    def test_root_only(self):
        assert validate_model(model()) == []

    def test_duplicate_name(self):
        fm = model(Feature("Cost"), Feature("A", children=(Feature("Cost"),)))
        assert validate_model(fm) == [ModelError("duplicate-name", "Cost")]

    def test_case_study_models_are_clean(self, cc, csc):
        assert validate_model(cc) == []
        assert validate_model(csc) == []

    def test_undersized_group(self):
        errors = validate_model(model(Feature("A"), group="alternative"))
        assert [(e.category, e.feature) for e in errors] == [("undersized-group", "R")]

    def test_dangling_and_self_constraints(self):
        fm = model(
            Feature("A"),
            Feature("B"),
            constraints=(CrossTreeConstraint("requires", "A", "Z"), CrossTreeConstraint("excludes", "B", "B")),
        )
        cats = sorted((e.category, e.feature) for e in validate_model(fm))
        assert cats == [("dangling-constraint", "Z"), ("self-constraint", "B")]

    def test_attribute_ranges(self):
        fm = model(Feature("A", attributes={"min_qoc": "1.2"}), Feature("B", attributes={"cost": float("inf")}))
        cats = [(e.category, e.feature) for e in validate_model(fm)]
        assert cats == [("bad-attribute-range", "A"), ("bad-attribute-range", "B")]

    def test_group_kind_checked_at_construction(self):
        with pytest.raises(ValueError):
            Feature("A", group="xor")


class TestValidity:
    def test_missing_mandatory(self):
        fm = model(Feature("Id", mandatory=True))
        assert not is_valid_configuration(fm, cfg("R"))
        assert is_valid_configuration(fm, cfg("R", "Id"))

    def test_alternative_exactly_one(self):
        fm = model(Feature("Europe"), Feature("Asia"), group="alternative")
        assert is_valid_configuration(fm, cfg("R", "Europe"))
        assert not is_valid_configuration(fm, cfg("R", "Europe", "Asia"))
        assert not is_valid_configuration(fm, cfg("R"))

    def test_or_at_least_one(self):
        fm = model(Feature("A"), Feature("B"), group="or")
        assert not is_valid_configuration(fm, cfg("R"))
        assert is_valid_configuration(fm, cfg("R", "A", "B"))

    def test_child_of_unselected(self):
        fm = model(Feature("A", children=(Feature("B"),)))
        assert not is_valid_configuration(fm, cfg("R", "B"))

    def test_root_required(self):
        assert not is_valid_configuration(model(Feature("A")), cfg("A"))

    def test_constraints(self):
        fm = model(Feature("A"), Feature("B"), constraints=(CrossTreeConstraint("requires", "A", "B"),))
        assert not is_valid_configuration(fm, cfg("R", "A"))
        assert is_valid_configuration(fm, cfg("R", "A", "B"))
        fm = model(Feature("A"), Feature("B"), constraints=(CrossTreeConstraint("excludes", "A", "B"),))
        assert not is_valid_configuration(fm, cfg("R", "A", "B"))

    def test_unknown_feature(self):
        with pytest.raises(UnknownFeatureError):
            is_valid_configuration(model(), cfg("R", "Ghost"))

    def test_case_study_consumer(self, cc):
        chosen = cfg(
            "CC_SPL", "Id", "Security", "Authentication", "OAuth", "MobileDevice", "Phone",
            "ProfileLanguage", "English", "Geolocation", "Europe",
        )
        assert is_valid_configuration(cc, chosen)
        assert not is_valid_configuration(cc, Configuration(chosen.selected - {"Id"}))


class TestEnumeration:
    def test_optional_doubles(self):
        assert len(enumerate_products(model(Feature("A")), 10)) == 2

    @pytest.mark.parametrize("group,expected", [("alternative", 3), ("or", 7)])
    def test_group_of_three(self, group, expected):
        fm = model(Feature("A"), Feature("B"), Feature("C"), group=group)
        assert len(enumerate_products(fm, 100)) == expected
        assert count_products(fm) == expected

    def test_or_of_two(self):
        assert len(enumerate_products(model(Feature("A"), Feature("B"), group="or"), 10)) == 3

    def test_canonical_order(self):
        products = enumerate_products(model(Feature("A"), Feature("B"), group="or"), 10)
        assert [p.sorted() for p in products] == [("A", "B", "R"), ("A", "R"), ("B", "R")]

    def test_truncation_marker(self):
        fm = model(Feature("A"), Feature("B"), Feature("C"), group="or")
        products = enumerate_products(fm, 4)
        assert len(products) == 4 and products.truncated and products.total == 7
        assert not enumerate_products(fm, 7).truncated

    def test_too_large(self):
        fm = model(*(Feature(f"A{i}") for i in range(24)))
        with pytest.raises(TooLargeError):
            enumerate_products(fm, 10)
        with pytest.raises(TooLargeError):
            count_products(fm)

    def test_chain_count_matches_hand_enumeration(self):
        fm = chain(3)
        assert count_products(fm) == 4
        assert {p.selected for p in enumerate_products(fm)} == brute_force_products(fm)

    def test_mandatory_only(self):
        assert count_products(model(Feature("A", mandatory=True))) == 1

    def test_constraints_reduce_count(self):
        fm = model(Feature("A"), Feature("B"), constraints=(CrossTreeConstraint("excludes", "A", "B"),))
        assert count_products(fm) == 3

    def test_case_study_counts(self, cc, csc):
        assert count_products(cc) == len(enumerate_products(cc)) == 3 * 3 * 3 * 4 * 8
        assert count_products(csc) == len(enumerate_products(csc))

    @pytest.mark.parametrize("seed", range(10))
    def test_ten_feature_model_matches_oracle(self, seed):
        fm = random_model(random.Random(seed), max_features=10, min_features=10)
        assert {p.selected for p in enumerate_products(fm)} == brute_force_products(fm)


class TestRequirements:
    def test_geolocation_europe(self, cc):
        partial = resolve_requirements(cc, [RequirementTriple("Geolocation", "Europe")])
        assert partial.selected == {"CC_SPL", "Geolocation", "Europe"}

    def test_nested_value(self, csc):
        partial = resolve_requirements(csc, [RequirementTriple("Authentication", "OAuth")])
        assert partial.selected == {"CSC_SPL", "QoS", "Security", "Authentication", "OAuth"}

    def test_absent_value(self, cc):
        with pytest.raises(NoSuchValueError):
            resolve_requirements(cc, [RequirementTriple("Geolocation", "Mars")])

    def test_absent_feature(self, cc):
        with pytest.raises(NoSuchFeatureError):
            resolve_requirements(cc, [RequirementTriple("Orbit", "Mars")])

    def test_empty(self, cc):
        assert resolve_requirements(cc, []).selected == {"CC_SPL"}


class TestCompletion:
    def test_full_configuration_is_fixpoint(self, cc):
        full = enumerate_products(cc, 5)[3]
        assert full in complete_configuration(cc, full)
        maximal = max(enumerate_products(cc), key=len)
        assert complete_configuration(cc, maximal) == [maximal]

    def test_excludes_pair_is_unsatisfiable(self):
        fm = model(Feature("A"), Feature("B"), constraints=(CrossTreeConstraint("excludes", "A", "B"),))
        assert complete_configuration(fm, cfg("R", "A", "B")) == []

    def test_case_study_completions(self, csc):
        reqs = [
            RequirementTriple("MachineSeize", "Small"),
            RequirementTriple("Authentication", "OAuth"),
            RequirementTriple("Geolocation", "Europe"),
        ]
        partial = resolve_requirements(csc, reqs)
        completions = complete_configuration(csc, partial)
        oracle = [p for p in enumerate_products(csc) if partial.selected <= p.selected]
        assert completions == oracle and completions
        assert all({"Europe", "OAuth", "Small"} <= c.selected for c in completions)


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_oracle_equivalence_property(rng):
    fm = random_model(rng, max_features=9)
    products = enumerate_products(fm)
    assert {p.selected for p in products} == brute_force_products(fm)
    assert products == enumerate_products(fm)
    assert count_products(fm) == len(products)


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_structural_invariants(rng):
    fm = random_model(rng, max_features=10)
    for p in enumerate_products(fm):
        for f in fm.features():
            if f.name not in p:
                continue
            chosen = [c.name for c in f.children if c.name in p]
            if f.group == "and":
                assert all(c.name in p for c in f.children if c.mandatory)
            elif f.group == "alternative":
                assert len(chosen) == 1


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_completion_matches_superset_filter(rng):
    fm = random_model(rng, max_features=9)
    names = fm.names()
    seed = [fm.root.name] + rng.sample(names, rng.randint(0, min(3, len(names))))
    partial = Configuration(frozenset(seed))
    completions = complete_configuration(fm, partial)
    oracle = [p for p in enumerate_products(fm) if partial.selected <= p.selected]
    assert completions == oracle
    assert complete_configuration(fm, partial) == completions


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_resolved_requirements_extend_to_a_product(rng):
    fm = random_model(rng, max_features=9)
    parents = [f for f in fm.features() if f.children]
    reqs = [RequirementTriple(p.name, rng.choice(p.children).name) for p in rng.sample(parents, min(2, len(parents)))]
    partial = resolve_requirements(fm, reqs)
    completions = complete_configuration(fm, partial)
    if completions:
        assert any(partial.selected <= c.selected for c in completions)


@pytest.mark.parametrize(
    "value,text",
    [(0, "0"), (3, "3"), ("1/2", "0.5"), ("-3/4", "-0.75"), ("1/3", "1/3"), ("1/100", "0.01"), ("-7/20", "-0.35")],
)
def test_format_number(value, text):
    from fractions import Fraction

    assert format_number(Fraction(value)) == text
    assert Fraction(text) == Fraction(value)
