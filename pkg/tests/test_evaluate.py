import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from embkit.errors import DataError
from embkit.evaluate import (AnalogyQuestion, ChoiceQuestion, PgrInput,
                             SimilarityPair, avg_document_vector, classify,
                             cosine, eval_analogy, eval_choice,
                             eval_similarity, load_analogies,
                             logistic_loss_grads, nearest_neighbors, pearson,
                             pgr, pgr_percent, train_logistic_classifier)
from embkit.io_formats import EmbeddingTable
from embkit.optim import gradient_check


def table_from(tokens, rows):
    return EmbeddingTable(tokens, np.asarray(rows, dtype=float))


def test_cosine_identity_and_orthogonal():
    v = np.array([1.0, 2.0, -1.0])
    assert cosine(v, v) == pytest.approx(1.0)
    assert cosine([1, 0], [0, 1]) == pytest.approx(0.0)


def test_cosine_matches_hand_arithmetic():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=6), rng.normal(size=6)
    byhand = float(u @ v) / (np.sqrt(u @ u) * np.sqrt(v @ v))
    assert cosine(u, v) == pytest.approx(byhand, abs=1e-12)


def test_cosine_zero_vector_errors():
    with pytest.raises(DataError):
        cosine([0.0, 0.0], [1.0, 0.0])


def test_pearson_affine():
    x = [1.0, 2.0, 5.0, 7.0]
    assert pearson(x, [2 * v + 1 for v in x]) == pytest.approx(1.0)
    assert pearson(x, [-v for v in x]) == pytest.approx(-1.0)


def test_pearson_matches_scipy():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=100), rng.normal(size=100)
    assert pearson(x, y) == pytest.approx(scipy.stats.pearsonr(x, y)[0],
                                          abs=1e-10)


def test_pearson_zero_variance_errors():
    with pytest.raises(DataError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


@given(a=st.floats(0.01, 100), b=st.floats(-100, 100),
       c=st.floats(0.01, 100), d=st.floats(-100, 100))
def test_pearson_invariant_under_positive_affine(a, b, c, d):
    x = np.array([0.5, 1.0, -2.0, 3.5, 0.1])
    y = np.array([1.5, -0.7, 2.2, 0.4, -1.1])
    base = pearson(x, y)
    assert pearson(a * x + b, c * y + d) == pytest.approx(base, abs=1e-8)


def test_eval_similarity_monotone_linear_construction():
    # build vectors whose cosines equal the human scores after an affine map
    pairs = [SimilarityPair("a", "b", 6.81), SimilarityPair("c", "d", 0.31),
             SimilarityPair("e", "f", 3.5)]
    tokens, rows = [], []
    for k, pair in enumerate(pairs):
        angle = np.arccos(pair.score / 10.0)
        tokens += [pair.word_a, pair.word_b]
        rows += [[1.0, 0.0], [np.cos(angle), np.sin(angle)]]
        # rotate each pair into its own plane? cosine only needs the two rows
    table = table_from(tokens, rows)
    result = eval_similarity(table, pairs)
    assert result["pearson"] == pytest.approx(1.0, abs=1e-9)
    assert result["covered_pairs"] == 3 and result["total_pairs"] == 3


def test_eval_similarity_skips_oov_pairs():
    table = table_from(["a", "b", "c", "d"],
                       [[1, 0], [0.9, 0.1], [0, 1], [1, 1]])
    pairs = [SimilarityPair("a", "b", 5.0), SimilarityPair("a", "zz", 9.0),
             SimilarityPair("c", "d", 1.0)]
    result = eval_similarity(table, pairs)
    assert result["covered_pairs"] == 2
    assert result["total_pairs"] == 3


def test_eval_similarity_all_oov_errors():
    table = table_from(["x"], [[1.0, 0.0]])
    with pytest.raises(DataError):
        eval_similarity(table, [SimilarityPair("a", "b", 1.0)])


def test_eval_choice_paper_example_shape():
    # "levied" -> "imposed" among four options
    table = table_from(
        ["levied", "imposed", "believed", "requested", "correlated"],
        [[1, 0], [0.9, 0.1], [0, 1], [-1, 0], [0.1, -0.9]])
    q = ChoiceQuestion("levied",
                       ("imposed", "believed", "requested", "correlated"), 0)
    assert eval_choice(table, [q]) == 1.0


def test_eval_choice_oov_query_counts_wrong():
    table = table_from(["a", "b", "c", "d", "e"],
                       [[1, 0]] * 5)
    q = ChoiceQuestion("zz", ("a", "b", "c", "d"), 0)
    assert eval_choice(table, [q]) == 0.0


def test_eval_choice_oov_option_scores_minus_inf():
    table = table_from(["q", "right"], [[1, 0], [1, 0.01]])
    q = ChoiceQuestion("q", ("miss1", "right", "miss2", "miss3"), 1)
    assert eval_choice(table, [q]) == 1.0


def test_eval_choice_tie_breaks_to_lowest_index():
    table = table_from(["q", "o1", "o2"], [[1, 0], [2, 0], [2, 0]])
    same = ChoiceQuestion("q", ("o1", "o2", "o1", "o2"), 0)
    assert eval_choice(table, [same]) == 1.0


def test_eval_choice_matches_bruteforce():
    rng = np.random.default_rng(3)
    tokens = [f"t{i}" for i in range(30)]
    table = table_from(tokens, rng.normal(size=(30, 8)))
    questions = []
    for _ in range(40):
        ids = rng.choice(30, size=5, replace=False)
        opts = tuple(tokens[i] for i in ids[1:])
        sims = [cosine(table.vectors[ids[0]], table.vectors[i])
                for i in ids[1:]]
        questions.append(ChoiceQuestion(tokens[ids[0]], opts,
                                        int(np.argmax(sims))))
    assert eval_choice(table, questions) == 1.0


def test_eval_analogy_parallelogram_construction():
    # e(b) - e(a) = e(expected) - e(c), exactly
    a, b, c = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    expected = c + (b - a)
    table = table_from(["a", "b", "c", "d", "noise"],
                       [a, b, c, expected, [-1.0, -1.0]])
    result = eval_analogy(table, [AnalogyQuestion("a", "b", "c", "d")])
    assert result["accuracy"] == 1.0


def test_eval_analogy_skips_oov():
    table = table_from(["a", "b", "c", "d"], np.eye(4))
    qs = [AnalogyQuestion("a", "b", "c", "zz"),
          AnalogyQuestion("zz", "b", "c", "d")]
    result = eval_analogy(table, qs)
    assert result["skipped"] == 2 and result["answered"] == 0


def test_eval_analogy_matches_bruteforce():
    rng = np.random.default_rng(4)
    tokens = [f"t{i}" for i in range(12)]
    table = table_from(tokens, rng.normal(size=(12, 5)))
    questions = [AnalogyQuestion(*[tokens[i] for i in
                                   rng.choice(12, 4, replace=False)])
                 for _ in range(30)]
    hits = 0
    for q in questions:
        ia, ib, ic = (table.token_to_id[w] for w in (q.a, q.b, q.c))
        query = table.vectors[ib] - table.vectors[ia] + table.vectors[ic]
        best, best_sim = None, -np.inf
        for cand in range(12):
            if cand in (ia, ib, ic):
                continue
            sim = cosine(table.vectors[cand], query)
            if sim > best_sim:
                best, best_sim = cand, sim
        hits += int(tokens[best] == q.expected)
    result = eval_analogy(table, questions)
    assert result["accuracy"] == pytest.approx(hits / len(questions))


def test_eval_analogy_scale_invariant():
    rng = np.random.default_rng(5)
    tokens = [f"t{i}" for i in range(10)]
    vectors = rng.normal(size=(10, 4))
    questions = [AnalogyQuestion(*[tokens[i] for i in
                                   rng.choice(10, 4, replace=False)])
                 for _ in range(20)]
    base = eval_analogy(table_from(tokens, vectors), questions)
    scaled = eval_analogy(table_from(tokens, 7.3 * vectors), questions)
    assert base["accuracy"] == scaled["accuracy"]


def test_nearest_neighbors_basics():
    table = table_from(["a", "b", "c"], np.eye(3))
    assert nearest_neighbors(table, "a", 0) == []
    out = nearest_neighbors(table, "a", 2)
    assert [t for t, _ in out] == ["b", "c"]  # tie on cosine 0, id ascending
    assert [s for _, s in out] == pytest.approx([0.0, 0.0])


def test_nearest_neighbors_excludes_query_and_matches_sort_oracle():
    rng = np.random.default_rng(6)
    tokens = [f"t{i}" for i in range(1000)]
    table = table_from(tokens, rng.normal(size=(1000, 10)))
    out = nearest_neighbors(table, "t500", 7)
    sims = [(cosine(table.vectors[i], table.vectors[500]), tokens[i])
            for i in range(1000) if i != 500]
    oracle = sorted(range(len(sims)), key=lambda n: (-sims[n][0], n))
    expected = [sims[n][1] for n in oracle[:7]]
    assert [t for t, _ in out] == expected


def test_nearest_neighbors_oov_errors():
    table = table_from(["a"], [[1.0]])
    with pytest.raises(DataError):
        nearest_neighbors(table, "zz", 3)


def test_avg_document_vector_single_word():
    table = table_from(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
    assert avg_document_vector(table, ["a"]) == pytest.approx([1.0, 2.0])


def test_avg_document_vector_frequency_weighting():
    table = table_from(["a", "b"], [[1.0, 0.0], [0.0, 1.0]])
    out = avg_document_vector(table, ["a", "a", "b"])
    assert out == pytest.approx([2 / 3, 1 / 3])


def test_avg_document_vector_matches_weighted_mean_oracle():
    rng = np.random.default_rng(7)
    tokens = [f"t{i}" for i in range(20)]
    table = table_from(tokens, rng.normal(size=(20, 6)))
    doc = [tokens[int(i)] for i in rng.integers(0, 20, 50)] + ["oov1", "oov2"]
    counts = {}
    for t in doc:
        if t in table:
            counts[t] = counts.get(t, 0) + 1
    oracle = sum(c * table.vector(t) for t, c in counts.items()) \
        / sum(counts.values())
    assert avg_document_vector(table, doc) == pytest.approx(oracle, abs=1e-12)


def test_avg_document_vector_all_oov_errors():
    table = table_from(["a"], [[1.0]])
    with pytest.raises(DataError):
        avg_document_vector(table, ["zz"])


def test_logistic_classifier_separable():
    rng = np.random.default_rng(8)
    xs = np.vstack([rng.normal([2, 2], 0.3, (30, 2)),
                    rng.normal([-2, -2], 0.3, (30, 2))])
    ys = [0] * 30 + [1] * 30
    clf = train_logistic_classifier(xs, ys, epochs=30, lr=0.5, seed=0)
    assert clf.accuracy(xs, ys) == 1.0
    assert classify(clf, [2.0, 2.0]) == 0


def test_logistic_large_l2_predicts_majority():
    # l2 -> infinity drives the weights to zero; lr * l2 stays below the SGD
    # stability bound so the shrinkage actually converges
    rng = np.random.default_rng(9)
    xs = rng.normal(size=(50, 3))
    ys = [0] * 35 + [1] * 15
    clf = train_logistic_classifier(xs, ys, l2=5000.0, epochs=200, lr=1e-4,
                                    seed=0)
    assert np.abs(clf.weights).max() < 1e-3
    preds = [classify(clf, x) for x in xs]
    assert preds == [0] * 50


def test_logistic_single_class_errors():
    with pytest.raises(DataError):
        train_logistic_classifier(np.zeros((4, 2)), [1, 1, 1, 1])


def test_logistic_loss_gradients():
    rng = np.random.default_rng(10)
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    x = rng.normal(size=4)

    def f(theta):
        w = theta[:12].reshape(3, 4)
        bias = theta[12:]
        loss, dW, db = logistic_loss_grads(w, bias, x, 2, l2=0.1)
        return loss, np.concatenate([dW.ravel(), db])

    assert gradient_check(f, np.concatenate([W.ravel(), b])) < 1e-6


def test_pgr_paper_cells():
    assert pgr_percent(pgr(PgrInput(51.78, 0.0, 55.83))) == 93
    assert pgr_percent(pgr(PgrInput(74.68, 64.38, 74.94))) == 98


def test_pgr_endpoints():
    assert pgr(PgrInput(55.83, 0.0, 55.83)) == 1.0
    assert pgr(PgrInput(0.0, 0.0, 55.83)) == 0.0


def test_pgr_negative_allowed():
    assert pgr(PgrInput(90.0, 95.41, 96.77)) < 0


def test_pgr_undefined_errors():
    with pytest.raises(DataError):
        pgr(PgrInput(1.0, 2.0, 2.0))


def test_pgr_percent_rounds_half_away_from_zero():
    assert pgr_percent(0.975) == 98
    assert pgr_percent(0.125) == 13
    assert pgr_percent(-0.125) == -13
    assert pgr_percent(0.1249) == 12


def test_load_analogies_with_categories(tmp_path):
    path = tmp_path / "analogy.txt"
    path.write_text(": capital\nking queen man woman\n: tense\ngo went run ran\n",
                    encoding="utf-8")
    questions = load_analogies(path)
    assert questions[0] == AnalogyQuestion("king", "queen", "man", "woman",
                                           "capital")
    assert questions[1].category == "tense"
