import math
from itertools import combinations

import numpy as np
import pytest

from citegeom.analytics import (
    CollinearDesignError,
    IndicatorRecord,
    REGRESSION_COLUMNS,
    decile_aggregate,
    decile_assign,
    field_split_citations,
    group_aggregate,
    percentile_within_group,
    pinball_loss,
    positive_disruption_share,
    quantile_regression,
    signed_log,
    spearman_matrix,
    top_cited_share,
    trend_table,
    window_spans,
    windowed_regression,
)


# ---------------------------------------------------------------------------
# percentiles
# ---------------------------------------------------------------------------

def rank_percentile_oracle(values):
    """Independent average-rank percentile: 100 * rank / (n + 1)."""
    out = []
    n = len(values)
    for v in values:
        below = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        avg_rank = below + (equal + 1) / 2.0
        out.append(100.0 * avg_rank / (n + 1))
    return out


def test_percentile_simple_group():
    got = percentile_within_group([10.0, 20.0, 30.0], ["g"] * 3)
    np.testing.assert_allclose(got, [25.0, 50.0, 75.0])
    np.testing.assert_allclose(got, rank_percentile_oracle([10.0, 20.0, 30.0]))


def test_percentile_all_equal_group():
    np.testing.assert_allclose(percentile_within_group([7.0] * 4, ["g"] * 4), 50.0)


def test_percentile_singleton_group():
    np.testing.assert_allclose(percentile_within_group([123.0], ["g"]), [50.0])


def test_percentile_respects_groups_and_oracle():
    rng = np.random.default_rng(2)
    values = rng.integers(0, 10, size=60).astype(float)
    groups = rng.integers(0, 3, size=60)
    got = percentile_within_group(values, groups)
    for g in np.unique(groups):
        mask = groups == g
        np.testing.assert_allclose(got[mask],
                                   rank_percentile_oracle(list(values[mask])))


def test_percentile_tie_swap_symmetry():
    values = [5.0, 3.0, 5.0, 1.0]
    base = percentile_within_group(values, ["g"] * 4)
    swapped = percentile_within_group([5.0, 3.0, 5.0, 1.0][::-1], ["g"] * 4)
    # swapping the two tied records (positions 0 and 2) changes nothing
    assert base[0] == base[2]
    np.testing.assert_allclose(sorted(base), sorted(swapped))


# ---------------------------------------------------------------------------
# transforms and shares
# ---------------------------------------------------------------------------

def test_signed_log_values():
    assert signed_log(0.0) == 0.0
    assert signed_log(0.001) == pytest.approx(math.log(2.0))
    assert signed_log(-0.001) == pytest.approx(-math.log(2.0))


def test_signed_log_odd_symmetry():
    xs = np.linspace(-1, 1, 41)
    np.testing.assert_allclose(signed_log(-xs), -signed_log(xs))


def test_positive_share_strict_inequality():
    labels = ["exploratory"] * 4
    assert positive_disruption_share(labels, [0.0, 0.0, 0.0, 0.0]) == {
        "exploratory": 0.0}
    assert positive_disruption_share(labels, [0.5, -0.5, 0.0, 0.25]) == {
        "exploratory": 0.5}


def test_field_split():
    tags = [{"astronomy"}, {"physics"}, {"astronomy", "physics"}]
    assert field_split_citations(tags, "astronomy") == (2, 1)
    assert field_split_citations([{"astronomy"}] * 5, "astronomy") == (5, 0)
    assert field_split_citations([{"physics"}] * 5, "astronomy") == (0, 5)


# ---------------------------------------------------------------------------
# top-cited share curves
# ---------------------------------------------------------------------------

def test_topshare_exchangeable_citations_track_prevalence():
    n = 300
    labels = (["consolidating", "balanced", "exploratory"] * (n // 3))
    ids = [f"P{i:04d}" for i in range(n)]
    citations = [10] * n
    rows = top_cited_share(citations, labels, ids, step_pct=1.0)
    for row in rows:
        k = row["n_top"]
        for lab in ("consolidating", "balanced", "exploratory"):
            assert abs(row[f"share_of_top_{lab}"] - row[f"prevalence_{lab}"]) \
                <= 1.5 / k + 1e-12


def test_topshare_full_threshold_equals_prevalence():
    labels = ["consolidating"] * 6 + ["balanced"] * 3 + ["exploratory"]
    ids = [f"P{i}" for i in range(10)]
    rows = top_cited_share(list(range(10)), labels, ids, step_pct=0.1)
    last = rows[-1]
    assert last["threshold_pct"] == pytest.approx(100.0)
    assert last["share_of_top_consolidating"] == pytest.approx(0.6)
    assert last["share_of_top_balanced"] == pytest.approx(0.3)
    assert last["share_of_top_exploratory"] == pytest.approx(0.1)
    for lab in ("consolidating", "balanced", "exploratory"):
        assert last[f"top_rate_{lab}"] == pytest.approx(1.0)


def test_topshare_inflated_label_rises_above_baseline():
    rng = np.random.default_rng(3)
    labels = ["consolidating"] * 50 + ["exploratory"] * 50
    citations = np.concatenate([rng.integers(50, 100, 50),
                                rng.integers(0, 40, 50)]).astype(float)
    ids = [f"P{i:03d}" for i in range(100)]
    rows = top_cited_share(citations, labels, ids, step_pct=1.0)
    top10 = next(r for r in rows if r["threshold_pct"] == pytest.approx(10.0))
    assert top10["share_of_top_consolidating"] > top10["prevalence_consolidating"]
    assert top10["top_rate_consolidating"] > top10["baseline_rate"]


# ---------------------------------------------------------------------------
# deciles
# ---------------------------------------------------------------------------

def test_decile_uniform_simulation():
    rng = np.random.default_rng(4)
    n = 10_000
    key = rng.uniform(0, 1, n)
    ids = [f"P{i:05d}" for i in range(n)]
    rows = decile_aggregate(key, {"v": key}, ids)
    expected = [0.05 + 0.1 * i for i in range(10)]
    for row, want in zip(rows, expected):
        assert row["mean_v"] == pytest.approx(want, abs=0.01)


def test_decile_constant_value_field():
    n = 50
    rows = decile_aggregate(np.arange(n, dtype=float), {"v": np.ones(n)},
                            [f"P{i}" for i in range(n)])
    assert all(row["mean_v"] == 1.0 for row in rows)


def test_decile_ten_distinct_records():
    rows = decile_aggregate(np.arange(10.0), {"v": np.arange(10.0)},
                            [f"P{i}" for i in range(10)])
    assert [row["n"] for row in rows] == [1] * 10
    assert [row["mean_v"] for row in rows] == list(np.arange(10.0))


@pytest.mark.parametrize("n", [10, 23, 57, 100, 101])
def test_decile_bin_conservation(n):
    rng = np.random.default_rng(n)
    bins = decile_assign(rng.normal(size=n), [f"P{i:03d}" for i in range(n)])
    sizes = np.bincount(bins, minlength=10)
    assert sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1


def test_decile_strata_splits_within_group():
    # two strata with disjoint key ranges: stratified deciles must mix them
    key = np.concatenate([np.arange(10.0), 100 + np.arange(10.0)])
    strata = np.array([0] * 10 + [1] * 10)
    ids = [f"P{i:02d}" for i in range(20)]
    rows = decile_aggregate(key, {"v": key}, ids, strata=strata)
    assert all(row["n"] == 2 for row in rows)
    # each decile holds one record from each stratum
    assert rows[0]["mean_v"] == pytest.approx((0.0 + 100.0) / 2)


# ---------------------------------------------------------------------------
# Spearman
# ---------------------------------------------------------------------------

def test_spearman_monotone_maps():
    x = np.random.default_rng(5).normal(size=40)
    names, m = spearman_matrix({"x": x, "double": 2 * x, "anti": -x**3})
    assert m[0][1] == pytest.approx(1.0)
    assert m[0][2] == pytest.approx(-1.0)
    np.testing.assert_allclose(np.diag(m), 1.0)
    np.testing.assert_allclose(m, m.T)


def test_spearman_matches_pearson_of_ranks_oracle():
    rng = np.random.default_rng(6)
    cols = {f"f{i}": rng.normal(size=100) for i in range(4)}
    names, m = spearman_matrix(cols)

    def ranks(a):
        # average-rank computation written out independently
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        i = 0
        sorted_a = a[order]
        while i < len(a):
            j = i
            while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
                j += 1
            r[order[i:j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return r

    for i, ni in enumerate(names):
        for j, nj in enumerate(names):
            ri, rj = ranks(cols[ni]), ranks(cols[nj])
            oracle = np.corrcoef(ri, rj)[0, 1]
            assert m[i][j] == pytest.approx(oracle, abs=1e-12)


def test_spearman_invariant_under_increasing_transform():
    rng = np.random.default_rng(7)
    x = rng.normal(size=60)
    y = rng.normal(size=60)
    _, base = spearman_matrix({"x": x, "y": y})
    _, mapped = spearman_matrix({"x": np.exp(3 * x) + 5, "y": y})
    assert mapped[0][1] == pytest.approx(base[0][1], abs=1e-12)


# ---------------------------------------------------------------------------
# quantile regression
# ---------------------------------------------------------------------------

def grid_search_loss(y, tau, points=200_001):
    grid = np.linspace(y.min(), y.max(), points)
    resid = y[:, None] - grid[None, :]
    losses = np.maximum(tau * resid, (tau - 1) * resid).mean(axis=0)
    return float(losses.min())


def vertex_oracle_loss(y, X, tau):
    """Enumerate all p-subsets of observations; the optimum interpolates one."""
    n, p = X.shape
    best = math.inf
    for subset in combinations(range(n), p):
        Xs = X[list(subset)]
        if abs(np.linalg.det(Xs)) < 1e-10:
            continue
        beta = np.linalg.solve(Xs, y[list(subset)])
        best = min(best, pinball_loss(y, X @ beta, tau))
    return best


def test_median_regression_intercept_only():
    y = np.array([1.0, 2.0, 3.0])
    beta, loss = quantile_regression(y, np.ones((3, 1)), 0.5)
    assert beta[0] == 2.0


def test_intercept_only_low_quantile_matches_grid_search():
    rng = np.random.default_rng(8)
    y = rng.normal(size=100)
    beta, loss = quantile_regression(y, np.ones((100, 1)), 0.1)
    assert loss == pytest.approx(grid_search_loss(y, 0.1), abs=1e-4)


def test_exact_linear_relation_interpolated():
    rng = np.random.default_rng(9)
    x = rng.normal(size=30)
    y = 2.0 + 3.5 * x
    X = np.column_stack([np.ones(30), x])
    beta, loss = quantile_regression(y, X, 0.5)
    np.testing.assert_allclose(beta, [2.0, 3.5], atol=1e-9)
    assert loss <= 1e-10


def test_random_designs_match_vertex_oracle():
    rng = np.random.default_rng(10)
    for trial in range(12):
        n = int(rng.integers(8, 21))
        p = int(rng.integers(1, 4))
        tau = float(rng.uniform(0.1, 0.9))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))]) \
            if p > 1 else np.ones((n, 1))
        y = rng.normal(size=n)
        _, loss = quantile_regression(y, X, tau)
        assert loss == pytest.approx(vertex_oracle_loss(y, X, tau), abs=1e-6)


def test_first_order_optimality_probe():
    rng = np.random.default_rng(11)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=n)
    beta, loss = quantile_regression(y, X, 0.5)
    for j in range(3):
        for delta in (1e-3, -1e-3):
            perturbed = beta.copy()
            perturbed[j] += delta
            assert pinball_loss(y, X @ perturbed, 0.5) >= loss - 1e-8 * max(1.0, loss)


def test_collinear_design_names_columns():
    rng = np.random.default_rng(12)
    x = rng.normal(size=20)
    X = np.column_stack([np.ones(20), x, 2 * x])
    with pytest.raises(CollinearDesignError) as err:
        quantile_regression(np.arange(20.0), X, 0.5, ["intercept", "a", "a_doubled"])
    assert set(err.value.columns) & {"a", "a_doubled"}


def test_too_few_observations_rejected():
    with pytest.raises(ValueError, match="observations"):
        quantile_regression(np.ones(2), np.ones((2, 2)), 0.5)


# ---------------------------------------------------------------------------
# windowed regression
# ---------------------------------------------------------------------------

def make_indicator(i, year, s_rp=0.5, s_pc=0.5, s_rc=0.5, cit_pct=50.0,
                   dis_pct=50.0, team=2, funding=False, n_refs=12):
    return IndicatorRecord(
        id=f"P{i:04d}", year=year, team_size=team, has_funding=funding,
        n_refs=n_refs, citation_count=10, within_field_citations=5,
        cross_field_citations=5, s_rp=s_rp, s_pc=s_pc, s_rc=s_rc,
        d_rp=1.0, d_pc=1.0, d_rc=1.0, area=0.1, label="balanced",
        n_refs_used=10, n_cites_used=5,
        citation_percentile_in_year=cit_pct,
        disruption_percentile_in_year=dis_pct,
    )


def test_window_spans_tile_decade():
    assert window_spans(range(1960, 1970)) == [(1960, 1965), (1965, 1970)]
    assert window_spans([1963]) == [(1960, 1965)]


def test_windowed_regression_two_windows():
    rng = np.random.default_rng(13)
    rows = []
    for i in range(120):
        year = 1960 + int(rng.integers(0, 10))
        rows.append(make_indicator(
            i, year,
            s_rp=float(rng.uniform(0, 1)), s_pc=float(rng.uniform(0, 1)),
            s_rc=float(rng.uniform(0, 1)),
            cit_pct=float(rng.uniform(0, 100)), dis_pct=float(rng.uniform(0, 100)),
            team=int(rng.integers(1, 8)), funding=bool(rng.integers(0, 2)),
            n_refs=int(rng.integers(10, 30)),
        ))
    fits, skipped = windowed_regression(rows)
    assert {f.window for f in fits} == {(1960, 1965), (1965, 1970)}
    assert {f.outcome for f in fits} == {"citation_percentile",
                                         "disruption_percentile"}
    assert skipped == []
    for f in fits:
        assert f.n_obs > len(REGRESSION_COLUMNS)
        assert f.pinball_loss >= 0.0


def test_small_window_skipped_with_reason():
    rows = [make_indicator(i, 1970) for i in range(4)]
    fits, skipped = windowed_regression(rows)
    assert fits == []
    assert all(reason == "too_few_observations" for _, _, reason in skipped)


def test_planted_negative_coefficient_recovered():
    rng = np.random.default_rng(14)
    rows = []
    for i in range(200):
        s_rp = float(rng.uniform(0, 1))
        s_pc = float(rng.uniform(0, 1))
        s_rc = float(rng.uniform(0, 1))
        dis = 60.0 - 30.0 * s_rc + 5.0 * s_pc + float(rng.normal(0, 2))
        cit = 20.0 + 40.0 * s_rc + float(rng.normal(0, 2))
        rows.append(make_indicator(
            i, 2000 + int(rng.integers(0, 5)), s_rp=s_rp, s_pc=s_pc, s_rc=s_rc,
            cit_pct=cit, dis_pct=dis, team=int(rng.integers(1, 6)),
            funding=bool(rng.integers(0, 2)), n_refs=int(rng.integers(10, 25)),
        ))
    fits, _ = windowed_regression(rows)
    for fit in fits:
        if fit.outcome == "disruption_percentile":
            assert fit.coefficients["s_rc"] < 0
        else:
            assert fit.coefficients["s_rc"] > 0


def test_log_controls_rescales_count_coefficients():
    rng = np.random.default_rng(17)
    rows = []
    for i in range(150):
        team = int(rng.integers(1, 20))
        cit = 10.0 * math.log(team) + float(rng.normal(0, 0.5))
        rows.append(make_indicator(
            i, 2000 + int(rng.integers(0, 5)),
            s_rp=float(rng.uniform(0, 1)), s_pc=float(rng.uniform(0, 1)),
            s_rc=float(rng.uniform(0, 1)), cit_pct=cit,
            team=team, funding=bool(rng.integers(0, 2)),
            n_refs=int(rng.integers(10, 25)),
        ))
    fits_log, _ = windowed_regression(rows, log_controls=True)
    cit_fit = next(f for f in fits_log if f.outcome == "citation_percentile")
    # the outcome is linear in log(team_size); the log design recovers it
    assert cit_fit.coefficients["team_size"] == pytest.approx(10.0, abs=1.0)
    fits_raw, _ = windowed_regression(rows, log_controls=False)
    raw_fit = next(f for f in fits_raw if f.outcome == "citation_percentile")
    assert raw_fit.coefficients["team_size"] != cit_fit.coefficients["team_size"]


def test_collinear_window_skipped_not_fatal():
    # constant funding inside the window is collinear with the intercept
    rows = [make_indicator(i, 1980, funding=True,
                           s_rp=float(i) / 40, s_pc=float(i % 7) / 7,
                           s_rc=float(i % 11) / 11, cit_pct=float(i),
                           team=1 + i % 5, n_refs=10 + i % 9)
            for i in range(40)]
    fits, skipped = windowed_regression(rows)
    assert fits == []
    assert all(reason.startswith("collinear:") for _, _, reason in skipped)
    assert any("has_funding" in reason for _, _, reason in skipped)


# ---------------------------------------------------------------------------
# trends and group aggregation
# ---------------------------------------------------------------------------

def test_trend_constant_field_is_flat():
    years = list(range(1970, 1990))
    rows = trend_table(years, {"v": [3.0] * 20})
    assert all(row["mean_v"] == 3.0 for row in rows if row["n"])


def test_trend_year_field_hits_bin_means():
    years = list(range(1970, 1980))
    rows = trend_table(years, {"v": [float(y) for y in years]})
    assert rows[0]["bin_start"] == 1970 and rows[0]["mean_v"] == pytest.approx(1972.0)
    assert rows[1]["bin_start"] == 1975 and rows[1]["mean_v"] == pytest.approx(1977.0)


def test_trend_empty_bin_gets_marker_row():
    years = [1970, 1971, 1985]
    rows = trend_table(years, {"v": [1.0, 2.0, 3.0]})
    starts = [row["bin_start"] for row in rows]
    assert starts == [1970, 1975, 1980, 1985]
    empty = [row for row in rows if row["n"] == 0]
    assert len(empty) == 2
    assert all(row["mean_v"] is None for row in empty)


def test_group_aggregate_shares_sum_to_one():
    rng = np.random.default_rng(15)
    groups = rng.integers(1, 6, size=200)
    labels = rng.choice(["exploratory", "balanced", "consolidating"], size=200)
    rows = group_aggregate(groups, {"x": rng.normal(size=200)}, labels)
    for row in rows:
        total = (row["share_exploratory"] + row["share_balanced"]
                 + row["share_consolidating"])
        assert total == pytest.approx(1.0, abs=1e-12)


def test_group_aggregate_single_record_group():
    rows = group_aggregate([7], {"x": [3.25]}, ["balanced"])
    assert rows == [{"group": 7, "n": 1, "mean_x": 3.25,
                     "share_exploratory": 0.0, "share_balanced": 1.0,
                     "share_consolidating": 0.0}]


def test_group_aggregate_planted_team_size_trend():
    rng = np.random.default_rng(16)
    team = rng.integers(1, 9, size=400)
    s_rc = 0.1 * team + rng.normal(0, 0.05, size=400)
    rows = group_aggregate(team, {"s_rc": s_rc}, None)
    means = [row["mean_s_rc"] for row in rows]
    assert all(a < b for a, b in zip(means, means[1:]))
