import math

import numpy as np
import pytest

from conftest import random_corpus, random_leaves, random_query
from oracles import (
    oracle_dts_all_tiles,
    oracle_min_tile_distances,
    oracle_rank,
    oracle_refine,
    oracle_update_penalties,
)
from subimage.feedback import (
    Corpus,
    FeedbackSet,
    PenaltyTable,
    dts,
    pairwise_leaf_distances,
    rank_images,
    refine_query,
    run_iteration,
    start_session,
    uniform_penalties,
    update_penalties,
    weighted_feature_mean,
)
from subimage.tiling import ImageSignature, QuerySignature


def _sig(rng, image_id=0, palette=16):
    return ImageSignature(image_id=image_id, leaves=random_leaves(rng, palette))


def _query_layers(query: QuerySignature) -> dict:
    return {0: query.g4.tolist(), 1: query.g2.tolist(), 2: query.g1.tolist()}


class TestUniformPenalties:
    def test_sum_and_value(self):
        p = uniform_penalties()
        assert p.shape == (26,)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert (p == 1.0 / 26).all()


class TestFeedbackSet:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            FeedbackSet(positives=(1, 2), negatives=(2, 3))

    def test_coerces_ints(self):
        fs = FeedbackSet(positives=(np.int64(1),), negatives=(np.int64(2),))
        assert fs.positives == (1,) and isinstance(fs.positives[0], int)


class TestPairwiseAndDts:
    def test_pairwise_matrix_is_leafwise_dlog(self):
        rng = np.random.default_rng(0)
        a, b = _sig(rng, 0), _sig(rng, 1)
        mat = pairwise_leaf_distances(a, b)
        assert mat.shape == (16, 16)
        from subimage.distance import dlog_distance

        for i in range(16):
            for j in range(16):
                assert mat[i, j] == dlog_distance(a.leaves[i], b.leaves[j])

    def test_min_tile_distances_match_oracle(self):
        rng = np.random.default_rng(1)
        from subimage.feedback import _min_tile_distances

        for _ in range(10):
            a, b = _sig(rng, 0), _sig(rng, 1)
            got = _min_tile_distances(pairwise_leaf_distances(a, b))
            want = oracle_min_tile_distances(a.leaves.tolist(), b.leaves.tolist())
            assert got.shape == (26,)
            for tid in range(26):
                assert got[tid] == float(want[tid])

    def test_dts_single_identical_image(self):
        rng = np.random.default_rng(2)
        a = _sig(rng, 0)
        same = ImageSignature(image_id=1, leaves=a.leaves.copy())
        assert dts(a, 0, [same]) == pytest.approx(1.0)

    def test_dts_lower_bound_is_set_size(self):
        rng = np.random.default_rng(3)
        a = _sig(rng, 0)
        others = [_sig(rng, i + 1) for i in range(4)]
        for tid in (0, 5, 20):
            assert dts(a, tid, others) >= len(others)

    def test_dts_hand_values(self):
        # one exact twin (min distance 0) and one image whose every leaf
        # differs by 2 in one bin (min distance 2 at every level):
        # exp(0) + exp(2)
        a = ImageSignature(image_id=0, leaves=np.full((16, 32), 4, dtype=np.uint8))
        twin = ImageSignature(image_id=1, leaves=a.leaves.copy())
        shifted = a.leaves.copy()
        shifted[:, 0] = 6
        far = ImageSignature(image_id=2, leaves=shifted)
        for tid in (0, 7, 20):
            assert dts(a, tid, [twin, far]) == pytest.approx(1.0 + math.exp(2.0))

    def test_dts_validates(self):
        rng = np.random.default_rng(5)
        a = _sig(rng, 0)
        with pytest.raises(ValueError):
            dts(a, 26, [a])
        with pytest.raises(ValueError):
            dts(a, 0, [])

    def test_dts_matches_oracle_per_tile(self):
        rng = np.random.default_rng(6)
        a = _sig(rng, 0)
        others = [_sig(rng, 1), _sig(rng, 2)]
        want = oracle_dts_all_tiles(a.leaves.tolist(), [o.leaves.tolist() for o in others])
        for tid in range(26):
            assert dts(a, tid, others) == pytest.approx(want[tid], rel=1e-12)


class TestUpdatePenalties:
    def test_requires_membership(self):
        rng = np.random.default_rng(7)
        a, b = _sig(rng, 0), _sig(rng, 1)
        with pytest.raises(ValueError):
            update_penalties(a, [b], [], 1)
        with pytest.raises(ValueError):
            update_penalties(a, [], [], 1)

    def test_self_only_feedback_keeps_simplex(self):
        rng = np.random.default_rng(8)
        a = _sig(rng, 0)
        table = update_penalties(a, [a], [], 1)
        assert table.image_id == 0
        assert table.iteration == 1
        assert table.penalties.sum() == pytest.approx(1.0, abs=1e-9)

    def test_symmetric_case_stays_uniform(self):
        # a uniform image is equidistant from every tile of itself
        leaves = np.full((16, 32), 4, dtype=np.uint8)
        a = ImageSignature(image_id=0, leaves=leaves)
        table = update_penalties(a, [a], [], 1)
        assert np.allclose(table.penalties, 1.0 / 26, atol=1e-12)

    def test_matches_literal_oracle(self):
        rng = np.random.default_rng(9)
        for trial in range(5):
            pos = [_sig(rng, i) for i in range(3)]
            neg = [_sig(rng, 10 + i) for i in range(2)]
            table = update_penalties(pos[0], pos, neg, 2)
            want = oracle_update_penalties(
                pos[0].leaves.tolist(),
                [p.leaves.tolist() for p in pos],
                [n.leaves.tolist() for n in neg],
            )
            assert table.penalties == pytest.approx(want, rel=1e-12)

    def test_no_negatives_drops_weighting(self):
        rng = np.random.default_rng(10)
        pos = [_sig(rng, i) for i in range(2)]
        table = update_penalties(pos[0], pos, [], 1)
        want = oracle_update_penalties(
            pos[0].leaves.tolist(), [p.leaves.tolist() for p in pos], []
        )
        assert table.penalties == pytest.approx(want, rel=1e-12)

    def test_invariants_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n_pos = int(rng.integers(1, 4))
            n_neg = int(rng.integers(0, 4))
            pos = [_sig(rng, i) for i in range(n_pos)]
            neg = [_sig(rng, 100 + i) for i in range(n_neg)]
            table = update_penalties(pos[0], pos, neg, 1)
            assert table.penalties.sum() == pytest.approx(1.0, abs=1e-9)
            assert (table.penalties >= 0).all()
            assert (table.penalties < 1).all()


class TestWeightedFeatureMean:
    def test_single_stack_identity(self):
        rng = np.random.default_rng(12)
        stack = rng.integers(0, 10, size=(1, 4, 8))
        out = weighted_feature_mean(stack, [0.375])
        assert np.array_equal(out, stack[0].astype(np.float64))

    def test_equal_weights_exact_mean(self):
        stacks = np.array([[[1, 2]], [[2, 5]]], dtype=np.int64)
        out = weighted_feature_mean(stacks, [0.3, 0.3])
        assert out.tolist() == [[1.5, 3.5]]

    def test_exact_half_ties_round_up(self):
        from subimage.feedback import _discretized_weighted_mean

        stacks = np.array([[[1]], [[2]]], dtype=np.int64)
        assert _discretized_weighted_mean(stacks, [0.5, 0.5]).tolist() == [[2]]
        stacks = np.array([[[0]], [[9]]], dtype=np.int64)
        assert _discretized_weighted_mean(stacks, [1.0, 1.0]).tolist() == [[5]]

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            weighted_feature_mean(np.zeros((2, 1, 1), dtype=np.int64), [1.0, 0.0])
        with pytest.raises(ValueError):
            weighted_feature_mean(np.zeros((2, 1, 1), dtype=np.int64), [1.0])


class TestRefineQuery:
    def test_no_positives_identity(self):
        rng = np.random.default_rng(13)
        q = random_query(rng, 16)
        assert refine_query(q, [], {}) is q

    def test_single_positive_adopts_min_penalty_tiles(self):
        rng = np.random.default_rng(14)
        q = random_query(rng, 16)
        sig = _sig(rng, 0)
        penalties = uniform_penalties()
        penalties[5] = 0.001  # cheapest half-size tile
        penalties[17] = 0.0005  # cheapest leaf
        penalties /= penalties.sum()
        tables = {0: PenaltyTable(image_id=0, penalties=penalties, iteration=1)}
        refined = refine_query(q, [sig], tables)
        assert np.array_equal(refined.g4, sig.tile_leaves(0))
        idx5 = np.argmin(penalties[1:10])
        assert np.array_equal(refined.g2, sig.tile_leaves(1 + int(idx5)))
        idx2 = np.argmin(penalties[10:26])
        assert np.array_equal(refined.g1, sig.tile_leaves(10 + int(idx2)))

    def test_tie_breaks_to_lowest_tile_id(self):
        rng = np.random.default_rng(15)
        q = random_query(rng, 16)
        sig = _sig(rng, 0)
        tables = {0: PenaltyTable(image_id=0, penalties=uniform_penalties(), iteration=1)}
        refined = refine_query(q, [sig], tables)
        # all penalties tie, so tiles 0, 1, 10 win their levels
        assert np.array_equal(refined.g4, sig.tile_leaves(0))
        assert np.array_equal(refined.g2, sig.tile_leaves(1))
        assert np.array_equal(refined.g1, sig.tile_leaves(10))

    def test_matches_oracle(self):
        rng = np.random.default_rng(16)
        q = random_query(rng, 16)
        sigs = [_sig(rng, i) for i in range(3)]
        tables = {}
        for sig in sigs:
            raw = rng.random(26) + 0.01
            tables[sig.image_id] = PenaltyTable(
                image_id=sig.image_id, penalties=raw / raw.sum(), iteration=1
            )
        refined = refine_query(q, sigs, tables)
        want = oracle_refine(
            [
                {
                    "leaves": sig.leaves.tolist(),
                    "penalties": tables[sig.image_id].penalties.tolist(),
                }
                for sig in sigs
            ],
            _query_layers(q),
        )
        assert refined.g4.tolist() == want[0]
        assert refined.g2.tolist() == want[1]
        assert refined.g1.tolist() == want[2]

    def test_output_stays_in_bin_range(self):
        rng = np.random.default_rng(17)
        q = random_query(rng, 16)
        sigs = [_sig(rng, i) for i in range(4)]
        tables = {
            s.image_id: PenaltyTable(s.image_id, uniform_penalties(), 1) for s in sigs
        }
        refined = refine_query(q, sigs, tables)
        for layer in (refined.g1, refined.g2, refined.g4):
            assert layer.min() >= 0 and layer.max() <= 9


class TestRankImages:
    def test_empty_corpus_rejected(self):
        rng = np.random.default_rng(18)
        with pytest.raises(ValueError):
            rank_images(random_query(rng, 16), Corpus([]))

    def test_bin_mismatch_rejected(self):
        rng = np.random.default_rng(19)
        corpus = random_corpus(rng, 3, palette_size=16)
        with pytest.raises(ValueError):
            rank_images(random_query(rng, 64), corpus)

    def test_duplicate_ids_rejected(self):
        rng = np.random.default_rng(20)
        with pytest.raises(ValueError):
            Corpus([_sig(rng, 1), _sig(rng, 1)])

    def test_self_query_ranks_first_with_zero(self):
        rng = np.random.default_rng(21)
        corpus = random_corpus(rng, 10, palette_size=16)
        target = corpus.get(4)
        query = QuerySignature(
            g1=target.leaves[:1].copy(),
            g2=target.leaves[:4].copy(),
            g4=target.leaves.copy(),
        )
        ranking = rank_images(query, corpus)
        assert ranking[0].image_id == 4
        assert ranking[0].score == 0.0

    def test_matches_exhaustive_oracle_uniform(self):
        rng = np.random.default_rng(22)
        corpus = random_corpus(rng, 12, palette_size=16)
        query = random_query(rng, 16)
        ranking = rank_images(query, corpus)
        want = oracle_rank(
            _query_layers(query),
            [{"id": int(s.image_id), "leaves": s.leaves.tolist()} for s in corpus],
        )
        assert [e.image_id for e in ranking] == [i for i, _ in want]
        for entry, (_, score) in zip(ranking, want):
            assert entry.score == pytest.approx(score, abs=1e-12)

    def test_matches_oracle_with_penalty_tables(self):
        rng = np.random.default_rng(23)
        corpus = random_corpus(rng, 10, palette_size=16)
        query = random_query(rng, 16)
        tables = {}
        for image_id in (2, 5):
            raw = rng.random(26) + 0.01
            tables[image_id] = PenaltyTable(image_id, raw / raw.sum(), 1)
        ranking = rank_images(query, corpus, tables)
        want = oracle_rank(
            _query_layers(query),
            [
                {
                    "id": int(s.image_id),
                    "leaves": s.leaves.tolist(),
                    "penalties": tables[s.image_id].penalties.tolist()
                    if s.image_id in tables
                    else None,
                }
                for s in corpus
            ],
        )
        assert [e.image_id for e in ranking] == [i for i, _ in want]
        for entry, (_, score) in zip(ranking, want):
            assert entry.score == pytest.approx(score, rel=1e-12, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(24)
        sigs = [_sig(rng, i) for i in range(15)]
        query = random_query(rng, 16)
        a = rank_images(query, Corpus(sigs))
        shuffled = list(sigs)
        rng.shuffle(shuffled)
        b = rank_images(query, Corpus(shuffled))
        assert a.ids() == b.ids()
        assert [e.score for e in a] == [e.score for e in b]

    def test_ties_break_by_ascending_id(self):
        rng = np.random.default_rng(25)
        leaves = random_leaves(rng, 16)
        sigs = [ImageSignature(image_id=i, leaves=leaves.copy()) for i in (4, 1, 3)]
        ranking = rank_images(random_query(rng, 16), Corpus(sigs))
        assert ranking.ids() == (1, 3, 4)

    def test_scores_nonnegative(self):
        rng = np.random.default_rng(26)
        ranking = rank_images(random_query(rng, 16), random_corpus(rng, 20, 16))
        assert all(e.score >= 0 for e in ranking)


class TestSessionLoop:
    def _session(self, rng, n=12):
        corpus = random_corpus(rng, n, palette_size=16)
        query = random_query(rng, 16)
        ranking, state = start_session("s", query, corpus, page_size=5)
        return corpus, query, ranking, state

    def test_start_session_records_page(self):
        rng = np.random.default_rng(27)
        corpus, query, ranking, state = self._session(rng)
        assert state.iteration == 1
        assert state.history[0].shown == tuple(e.image_id for e in ranking.top(5))
        assert state.penalty_tables == {}

    def test_empty_feedback_reproduces_ranking(self):
        rng = np.random.default_rng(28)
        corpus, query, ranking, state = self._session(rng)
        again, state = run_iteration(state, FeedbackSet(), corpus, page_size=5)
        assert again.ids() == ranking.ids()
        assert [e.score for e in again] == [e.score for e in ranking]
        assert state.iteration == 2

    def test_feedback_must_come_from_shown_page(self):
        rng = np.random.default_rng(29)
        corpus, query, ranking, state = self._session(rng)
        unshown = next(i for i in corpus.ids.tolist() if i not in state.history[0].shown)
        with pytest.raises(ValueError):
            run_iteration(state, FeedbackSet(positives=(unshown,)), corpus, page_size=5)

    def test_positive_gets_table_negative_does_not(self):
        rng = np.random.default_rng(30)
        corpus, query, ranking, state = self._session(rng)
        shown = state.history[0].shown
        feedback = FeedbackSet(positives=shown[:2], negatives=shown[2:4])
        run_iteration(state, feedback, corpus, page_size=5)
        assert set(state.penalty_tables) == set(shown[:2])
        record = state.history[0]
        assert record.positives == shown[:2]
        assert record.negatives == shown[2:4]

    def test_tables_persist_across_iterations(self):
        rng = np.random.default_rng(31)
        corpus, query, ranking, state = self._session(rng)
        first_pos = state.history[0].shown[0]
        run_iteration(state, FeedbackSet(positives=(first_pos,)), corpus, page_size=5)
        saved = state.penalty_tables[first_pos].penalties.copy()
        run_iteration(state, FeedbackSet(), corpus, page_size=5)
        assert np.array_equal(state.penalty_tables[first_pos].penalties, saved)

    def test_two_iteration_replay_matches_oracle(self):
        rng = np.random.default_rng(32)
        corpus = random_corpus(rng, 8, palette_size=16)
        query = random_query(rng, 16)
        ranking, state = start_session("s", query, corpus, page_size=4)

        layers = _query_layers(query)
        images = [{"id": int(s.image_id), "leaves": s.leaves.tolist()} for s in corpus]
        want = oracle_rank(layers, images)
        assert ranking.ids() == tuple(i for i, _ in want)

        shown = [i for i, _ in want[:4]]
        positives, negatives = shown[:2], shown[2:]
        ranking2, state = run_iteration(
            state, FeedbackSet(positives=tuple(positives), negatives=tuple(negatives)),
            corpus, page_size=4,
        )

        pos_leaves = [corpus.get(i).leaves.tolist() for i in positives]
        neg_leaves = [corpus.get(i).leaves.tolist() for i in negatives]
        oracle_tables = {
            i: oracle_update_penalties(corpus.get(i).leaves.tolist(), pos_leaves, neg_leaves)
            for i in positives
        }
        refined = oracle_refine(
            [{"leaves": corpus.get(i).leaves.tolist(), "penalties": oracle_tables[i]} for i in positives],
            layers,
        )
        want2 = oracle_rank(
            refined,
            [
                {
                    "id": int(s.image_id),
                    "leaves": s.leaves.tolist(),
                    "penalties": oracle_tables.get(int(s.image_id)),
                }
                for s in corpus
            ],
        )
        assert ranking2.ids() == tuple(i for i, _ in want2)
        for entry, (_, score) in zip(ranking2, want2):
            assert entry.score == pytest.approx(score, rel=1e-9, abs=1e-12)

    def test_session_independence(self):
        rng = np.random.default_rng(33)
        corpus = random_corpus(rng, 10, palette_size=16)
        query = random_query(rng, 16)
        first, state = start_session("a", query, corpus, page_size=5)
        shown = state.history[0].shown
        run_iteration(
            state, FeedbackSet(positives=shown[:1], negatives=shown[1:3]), corpus, page_size=5
        )
        fresh, _ = start_session("b", query, corpus, page_size=5)
        assert fresh.ids() == first.ids()
        assert [e.score for e in fresh] == [e.score for e in first]
