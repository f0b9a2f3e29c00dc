from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from convagg.errors import DimensionMismatchError, GroundTruthError
from convagg.retrieval import (
    GroundTruth,
    QueryGroundTruth,
    RankedList,
    average_precision,
    hamming_distances,
    mean_ap,
    parse_oxford_gt,
    search_cosine,
    search_hamming,
)
from convagg.storage import BinaryCodeFile, GlobalDescriptorFile, pack_bits, unpack_bits

from oracles import ap_oracle, hamming_oracle


def ranked(names, query="q"):
    return RankedList(query=query, names=list(names), scores=np.zeros(len(names)))


def gt(positives, junk=()):
    return QueryGroundTruth(positives=frozenset(positives), junk=frozenset(junk))


class TestSearch:
    def test_hamming_distance_two_bits_apart(self):
        codes = pack_bits(np.array([[1, 1, 0, 0]], dtype=np.uint8))
        query = pack_bits(np.array([[1, 0, 1, 0]], dtype=np.uint8))[0]
        assert hamming_distances(codes, query).tolist() == [2]

    def test_cosine_score(self):
        index = GlobalDescriptorFile(["a"], np.array([[1.0, 0.0]], dtype=np.float32))
        out = search_cosine(index, np.array([0.6, 0.8]))
        assert np.isclose(out.scores[0], 0.6)

    def test_identical_code_ranked_first(self):
        rows = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.uint8)
        index = BinaryCodeFile(["a", "b", "c"], 3, pack_bits(rows))
        out = search_hamming(index, pack_bits(rows[1:2])[0])
        assert out.names[0] == "b" and out.scores[0] == 0

    def test_name_tie_break(self):
        index = GlobalDescriptorFile(
            ["zeta", "alpha"], np.array([[1.0, 0.0], [1.0, 0.0]], dtype=np.float32)
        )
        out = search_cosine(index, np.array([1.0, 0.0]))
        assert out.names == ["alpha", "zeta"]

    def test_top_k(self):
        index = GlobalDescriptorFile(
            ["a", "b", "c"], np.eye(3, dtype=np.float32)
        )
        out = search_cosine(index, np.array([1.0, 0.0, 0.0]), top_k=2)
        assert len(out.names) == 2 and out.names[0] == "a"

    def test_dim_mismatch(self):
        index = GlobalDescriptorFile(["a"], np.ones((1, 3), dtype=np.float32))
        with pytest.raises(DimensionMismatchError):
            search_cosine(index, np.ones(2))
        codes = BinaryCodeFile(["a"], 70, pack_bits(np.ones((1, 70), dtype=np.uint8)))
        with pytest.raises(DimensionMismatchError):
            search_hamming(codes, np.zeros(1, dtype=np.uint64))

    def test_hamming_matches_bitwise_oracle_exhaustive(self):
        rng = np.random.default_rng(0)
        for bits in range(1, 17):
            if 2**bits <= 256:
                rows = unpack_bits(
                    np.arange(2**bits, dtype=np.uint64)[:, None], bits
                )
            else:
                rows = (rng.random((256, bits)) < 0.5).astype(np.uint8)
            packed = pack_bits(rows)
            queries = rows[:: max(1, rows.shape[0] // 8)]
            for q in queries:
                got = hamming_distances(packed, pack_bits(q[None, :])[0])
                want = [hamming_oracle(q, row) for row in rows]
                assert got.tolist() == want


class TestAveragePrecision:
    def test_junk_then_relevant(self):
        assert average_precision(ranked(["j", "r"]), gt({"r"}, {"j"})) == 1.0

    def test_single_relevant(self):
        assert average_precision(ranked(["r"]), gt({"r"})) == 1.0

    def test_rel_non_rel_case(self):
        ap = average_precision(ranked(["r1", "x", "r2"]), gt({"r1", "r2"}))
        assert abs(ap - 19.0 / 24.0) < 1e-12

    def test_exhaustive_against_oracle(self):
        # every labeling of every list length up to 8 over
        # {positive, negative, junk} with at least one ranked positive
        cases = 0
        for length in range(1, 9):
            for labels in itertools.product("pnj", repeat=length):
                if "p" not in labels:
                    continue
                names = [f"i{k}" for k in range(length)]
                positives = {n for n, l in zip(names, labels) if l == "p"}
                junk = {n for n, l in zip(names, labels) if l == "j"}
                got = average_precision(ranked(names), gt(positives, junk))
                want = ap_oracle(names, positives, junk)
                assert abs(got - want) < 1e-12
                assert 0.0 <= got <= 1.0 + 1e-12
                cases += 1
        assert cases > 6_000

    def test_ap_one_iff_positives_first(self):
        g = gt({"a", "b"}, {"z"})
        assert average_precision(ranked(["a", "b", "c"]), g) == 1.0
        assert average_precision(ranked(["a", "z", "b", "c"]), g) == 1.0
        assert average_precision(ranked(["a", "c", "b"]), g) < 1.0

    def test_junk_insertion_invariance(self):
        g = gt({"a", "b"}, {"j1", "j2"})
        base = average_precision(ranked(["a", "x", "b"]), g)
        spiked = average_precision(ranked(["j1", "a", "j2", "x", "b"]), g)
        assert base == spiked

    def test_exact_fraction_check(self):
        # independent hand calculation with exact rationals
        names = ["r", "x", "r2", "y", "r3"]
        g = gt({"r", "r2", "r3"})
        got = average_precision(ranked(names), g)
        f = Fraction(0)
        old_r, old_p = Fraction(0), Fraction(1)
        hits = 0
        for rank, name in enumerate(names, start=1):
            if name in g.positives:
                hits += 1
            r, p = Fraction(hits, 3), Fraction(hits, rank)
            f += (r - old_r) * (p + old_p) / 2
            old_r, old_p = r, p
        assert abs(got - float(f)) < 1e-15


class TestMeanAp:
    def test_mean_of_two(self):
        # q2 retrieves one of its two positives: AP exactly 0.5
        lists = [ranked(["r"], "q1"), ranked(["a"], "q2")]
        truth = GroundTruth(
            {"q1": gt({"r"}), "q2": gt({"a", "b"})}
        )
        assert mean_ap(lists, truth) == pytest.approx(0.75)

    def test_missing_query(self):
        with pytest.raises(GroundTruthError, match="q2"):
            mean_ap([ranked(["r"], "q2")], GroundTruth({"q1": gt({"r"})}))

    def test_overlapping_good_junk_rejected(self):
        with pytest.raises(GroundTruthError):
            QueryGroundTruth(positives=frozenset({"a"}), junk=frozenset({"a"}))

    def test_empty_positives_rejected(self):
        with pytest.raises(GroundTruthError):
            QueryGroundTruth(positives=frozenset(), junk=frozenset())


def write_query(gt_dir, name, image, positives, junk):
    (gt_dir / f"{name}_query.txt").write_text(f"{image} 1.0 2.0 30.5 40.25\n")
    (gt_dir / f"{name}_good.txt").write_text("\n".join(positives) + "\n")
    (gt_dir / f"{name}_ok.txt").write_text("")
    (gt_dir / f"{name}_junk.txt").write_text("\n".join(junk) + "\n")


class TestOxfordParsing:
    def test_basic_parse(self, tmp_path):
        write_query(tmp_path, "tower_1", "oxc1_tower_000042", ["tower_000001"], ["blurry"])
        truth = parse_oxford_gt(tmp_path)
        q = truth.queries["tower_1"]
        assert q.query_image == "tower_000042"  # corpus prefix stripped
        assert q.bbox == (1.0, 2.0, 30.5, 40.25)
        assert q.positives == {"tower_000001"}
        assert q.junk == {"blurry"}

    def test_missing_good_file(self, tmp_path):
        (tmp_path / "a_query.txt").write_text("img 0 0 1 1\n")
        with pytest.raises(GroundTruthError, match="good"):
            parse_oxford_gt(tmp_path)

    def test_malformed_query_line(self, tmp_path):
        (tmp_path / "a_query.txt").write_text("img 0 0 1\n")
        (tmp_path / "a_good.txt").write_text("x\n")
        (tmp_path / "a_ok.txt").write_text("")
        (tmp_path / "a_junk.txt").write_text("")
        with pytest.raises(GroundTruthError, match="malformed"):
            parse_oxford_gt(tmp_path)

    def test_55_query_layout(self, tmp_path):
        # the standard layout: 11 subjects x 5 queries each
        for subject in range(11):
            for i in range(1, 6):
                write_query(
                    tmp_path,
                    f"building{subject}_{i}",
                    f"oxc1_building{subject}_00000{i}",
                    [f"building{subject}_db{j}" for j in range(3)],
                    [f"junk{subject}"],
                )
        truth = parse_oxford_gt(tmp_path)
        assert len(truth) == 55
