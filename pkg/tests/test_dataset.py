import numpy as np
import pytest

from artcoord.dataset import (
    ClinicalScore,
    Database,
    DatasetSplit,
    Label,
    RecordingRecord,
    Scale,
    SeverityLevel,
    assign_label,
    class_weights,
    label_records,
    make_split,
    read_manifest,
    score_to_severity,
    verify_speaker_disjoint,
    write_manifest,
)


def rec(rid, spk, scores=(), label=None, db=Database.SYNTH):
    return RecordingRecord(
        recording_id=rid, speaker_id=spk, database=db, path=f"{rid}.acft",
        scores=tuple(scores), label=label,
    )


class TestSeverityMapping:
    # full band tables, bounds inclusive
    HAMD_CASES = [
        (0, SeverityLevel.NORMAL), (7, SeverityLevel.NORMAL),
        (8, SeverityLevel.MILD), (13, SeverityLevel.MILD),
        (14, SeverityLevel.MODERATE), (18, SeverityLevel.MODERATE),
        (19, SeverityLevel.SEVERE), (22, SeverityLevel.SEVERE),
        (23, SeverityLevel.VERY_SEVERE), (52, SeverityLevel.VERY_SEVERE),
    ]
    QIDS_CASES = [
        (0, SeverityLevel.NORMAL), (5, SeverityLevel.NORMAL),
        (6, SeverityLevel.MILD), (10, SeverityLevel.MILD),
        (11, SeverityLevel.MODERATE), (15, SeverityLevel.MODERATE),
        (16, SeverityLevel.SEVERE), (20, SeverityLevel.SEVERE),
        (21, SeverityLevel.VERY_SEVERE), (27, SeverityLevel.VERY_SEVERE),
    ]

    @pytest.mark.parametrize("value,expected", HAMD_CASES)
    def test_hamd_bands(self, value, expected):
        assert score_to_severity(ClinicalScore(Scale.HAMD, value)) == expected

    @pytest.mark.parametrize("value,expected", QIDS_CASES)
    def test_qids_bands(self, value, expected):
        assert score_to_severity(ClinicalScore(Scale.QIDS, value)) == expected

    @pytest.mark.parametrize("scale,value", [
        (Scale.HAMD, -1), (Scale.HAMD, 53), (Scale.QIDS, -1), (Scale.QIDS, 28),
    ])
    def test_out_of_range(self, scale, value):
        with pytest.raises(ValueError, match=scale.value):
            score_to_severity(ClinicalScore(scale, value))

    def test_monotone_per_scale(self):
        for scale, top in ((Scale.HAMD, 52), (Scale.QIDS, 27)):
            levels = [score_to_severity(ClinicalScore(scale, v)) for v in range(top + 1)]
            assert all(b >= a for a, b in zip(levels, levels[1:]))


class TestAssignLabel:
    def test_single_score_moderate_is_depressed(self):
        assert assign_label(rec("a", "s", [ClinicalScore(Scale.HAMD, 14)])) == Label.DEPRESSED

    def test_single_score_normal(self):
        assert assign_label(rec("a", "s", [ClinicalScore(Scale.HAMD, 7)])) == Label.NON_DEPRESSED

    def test_dual_disagreement_excluded(self):
        r = rec("a", "s", [ClinicalScore(Scale.HAMD, 9), ClinicalScore(Scale.QIDS, 4)])
        assert assign_label(r) is None

    def test_dual_agreement_normal(self):
        r = rec("a", "s", [ClinicalScore(Scale.HAMD, 3), ClinicalScore(Scale.QIDS, 2)])
        assert assign_label(r) == Label.NON_DEPRESSED

    def test_dual_same_binary_different_level(self):
        # moderate vs mild: excluded under strict agreement, kept in binary mode
        r = rec("a", "s", [ClinicalScore(Scale.HAMD, 14), ClinicalScore(Scale.QIDS, 6)])
        assert assign_label(r) is None
        assert assign_label(r, binary_agreement=True) == Label.DEPRESSED

    def test_no_scores_raises(self):
        with pytest.raises(ValueError, match="no clinical scores"):
            assign_label(rec("a", "s"))

    def test_single_score_total_within_bounds(self):
        for scale, top in ((Scale.HAMD, 52), (Scale.QIDS, 27)):
            for v in range(top + 1):
                label = assign_label(rec("a", "s", [ClinicalScore(scale, v)]))
                assert label in (Label.DEPRESSED, Label.NON_DEPRESSED)

    def test_label_records_partitions(self):
        records = [
            rec("a", "s1", [ClinicalScore(Scale.HAMD, 20)]),
            rec("b", "s2", [ClinicalScore(Scale.HAMD, 9), ClinicalScore(Scale.QIDS, 4)]),
        ]
        labeled, excluded = label_records(records)
        assert [r.recording_id for r in labeled] == ["a"]
        assert labeled[0].label == Label.DEPRESSED
        assert [r.recording_id for r in excluded] == ["b"]


class TestClassWeights:
    def test_80_20(self):
        w = class_weights([1] * 80 + [0] * 20)
        assert w.depressed == pytest.approx(0.625)
        assert w.non_depressed == pytest.approx(2.5)

    def test_balanced(self):
        w = class_weights([1] * 50 + [0] * 50)
        assert (w.depressed, w.non_depressed) == (1.0, 1.0)

    def test_99_1(self):
        w = class_weights([1] * 99 + [0] * 1)
        assert w.depressed == pytest.approx(100 / 198)
        assert w.non_depressed == pytest.approx(50.0)

    def test_weighted_counts_equal(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n_d = int(rng.integers(1, 500))
            n_nd = int(rng.integers(1, 500))
            w = class_weights([1] * n_d + [0] * n_nd)
            assert w.depressed * n_d == pytest.approx(w.non_depressed * n_nd, rel=1e-12)

    def test_single_class_raises(self):
        with pytest.raises(ValueError, match="both classes"):
            class_weights([1, 1, 1])


class TestMakeSplit:
    @staticmethod
    def balanced_records(n_speakers=10, per_speaker=1):
        records = []
        for s in range(n_speakers):
            label = Label.DEPRESSED if s % 2 else Label.NON_DEPRESSED
            for r in range(per_speaker):
                records.append(rec(f"s{s}_r{r}", f"spk{s}", label=label))
        return records

    def test_exact_divisibility(self):
        records = self.balanced_records(10)
        split = make_split(records, (0.8, 0.1, 0.1), seed=1)
        sizes = tuple(len(split.part(p)) for p in DatasetSplit.PART_NAMES)
        assert sizes == (8, 1, 1)
        verify_speaker_disjoint(split, records)

    def test_deterministic_per_seed(self):
        records = self.balanced_records(10)
        a = make_split(records, seed=3)
        b = make_split(records, seed=3)
        assert a == b

    def test_seed_changes_assignment(self):
        records = self.balanced_records(12)
        splits = {make_split(records, seed=s).train for s in range(20)}
        assert len(splits) > 1  # ties broken differently across seeds

    def test_speaker_recordings_stay_together(self):
        records = self.balanced_records(8, per_speaker=5)
        split = make_split(records, seed=0)
        # brute-force scan: every recording of a speaker in one part only
        for s in range(8):
            ids = {f"s{s}_r{r}" for r in range(5)}
            hits = [p for p in DatasetSplit.PART_NAMES if ids & set(split.part(p))]
            assert len(hits) == 1
            assert ids <= set(split.part(hits[0]))

    def test_disjointness_random_instances(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n_spk = int(rng.integers(3, 30))
            records = []
            for s in range(n_spk):
                label = Label(int(rng.integers(0, 2)))
                for r in range(int(rng.integers(1, 6))):
                    records.append(rec(f"t{trial}s{s}r{r}", f"spk{s}", label=label))
            split = make_split(records, seed=trial)
            verify_speaker_disjoint(split, records)
            all_ids = {r.recording_id for r in records}
            placed = set(split.train) | set(split.validation) | set(split.test)
            assert placed == all_ids
            assert len(split.train) + len(split.validation) + len(split.test) == len(all_ids)

    def test_stratification_tracks_targets(self):
        records = self.balanced_records(40, per_speaker=2)
        split = make_split(records, seed=5)
        by_id = {r.recording_id: r for r in records}
        train_labels = [by_id[i].label for i in split.train]
        frac_dep = np.mean([l == Label.DEPRESSED for l in train_labels])
        assert 0.3 < frac_dep < 0.7

    def test_too_few_speakers(self):
        records = [rec("a", "s1", label=Label.DEPRESSED), rec("b", "s2", label=Label.NON_DEPRESSED)]
        with pytest.raises(ValueError, match="infeasible"):
            make_split(records)

    def test_unlabeled_rejected(self):
        records = self.balanced_records(5)
        records[2].label = None
        with pytest.raises(ValueError, match="unlabeled"):
            make_split(records)

    def test_weights_change_stratification_unit(self):
        records = self.balanced_records(10)
        weights = {r.recording_id: 7.0 for r in records}
        split = make_split(records, seed=0, weights=weights)
        verify_speaker_disjoint(split, records)

    def test_split_file_roundtrip(self, tmp_path):
        split = make_split(self.balanced_records(10), seed=2)
        path = tmp_path / "split.json"
        split.save(path)
        assert DatasetSplit.load(path) == split


class TestManifest:
    def test_roundtrip(self, tmp_path):
        records = [
            rec("r1", "s1", [ClinicalScore(Scale.HAMD, 20)], db=Database.MD1),
            rec("r2", "s2", [ClinicalScore(Scale.HAMD, 3), ClinicalScore(Scale.QIDS, 2)], db=Database.MD2),
            rec("r3", "s3"),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, records)
        loaded = read_manifest(path)
        assert [r.recording_id for r in loaded] == ["r1", "r2", "r3"]
        assert loaded[0].scores == (ClinicalScore(Scale.HAMD, 20),)
        assert loaded[1].scores == (ClinicalScore(Scale.HAMD, 3), ClinicalScore(Scale.QIDS, 2))
        assert loaded[2].scores == ()
        assert loaded[1].database == Database.MD2

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, [rec("r1", "s1")])
        path.write_text(path.read_text() + path.read_text())
        with pytest.raises(ValueError, match="duplicate"):
            read_manifest(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text('{"recording_id": "a", "speaker_id": "s"}\n')
        with pytest.raises(ValueError, match="missing fields"):
            read_manifest(path)
