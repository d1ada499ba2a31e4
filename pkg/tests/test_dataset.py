from collections import Counter

import pytest
from hypothesis import given, strategies as st

from altgen.dataset import (AnnotatedIcon, DatasetStats, KeywordClassifier, RicoSchemaError, activity_of,
                            build_icon_dataset, load_rico_dir, load_rico_screen, read_captions, read_manifest,
                            read_splits, sample_finetune_subset, sample_r1, write_manifest)
from altgen.model import BoundingBox, node_at_path

from corpus import MINI_EXPECTED, write_mini_corpus


class TestLoadRico:
    def test_minimal(self):
        s = load_rico_screen({"activity_name": "A", "root": {"class": "FrameLayout", "bounds": [0, 0, 10, 10]}})
        assert s.activity_name == "A" and s.root.children == () and s.screen_dims == (10, 10)

    def test_resource_id_suffix_and_optional_text(self):
        s = load_rico_screen({"activity_name": "A", "root": {
            "class": "FrameLayout", "children": [{"class": "ImageButton", "resource-id": "com.app:id/rewind_button"}]}})
        child = s.root.children[0]
        assert child.resource_id == "rewind_button" and child.text is None

    def test_nested_activity_root_and_nulls(self):
        doc = {"activity_name": "com.app/.Main",
               "activity": {"root": {"class": "F", "children": [None, {"class": "B", "clickable": True}]}}}
        s = load_rico_screen(doc, "id1")
        assert s.screen_id == "id1" and s.activity_name == "com.app.Main"
        assert s.root.children[0].clickable is True

    @pytest.mark.parametrize("raw,name", [("com.a/com.a.ui.Main", "com.a.ui.Main"), ("com.a/.Main", "com.a.Main"),
                                          ("Plain", "Plain"), (None, "")])
    def test_activity_names(self, raw, name):
        assert activity_of(raw) == name

    def test_schema_error_names_path(self):
        doc = {"root": {"class": "F", "children": [{"class": "A"}, {"class": "B", "children": [{"text": "x"}]}]}}
        with pytest.raises(RicoSchemaError) as err:
            load_rico_screen(doc)
        assert err.value.path == [1, 0]

    def test_degenerate_bounds_dropped(self):
        s = load_rico_screen({"root": {"class": "F", "bounds": [0, 0, 100, 100],
                                       "children": [{"class": "B", "bounds": [50, 50, 50, 80]}]}})
        assert s.root.children[0].bounds is None

    def test_fixture_file(self, rewind_screen):
        assert rewind_screen.activity_name == "is.abide.ui.PlayerActivity"


class TestMiniCorpus:
    @pytest.fixture
    def built(self, tmp_path):
        screens_dir, captions, splits = write_mini_corpus(tmp_path)
        screens = list(load_rico_dir(screens_dir))
        return screens, build_icon_dataset(screens, captions, splits, seed=1)

    def test_counts(self, built):
        _, build = built
        assert build.stats.to_dict()["icons"] == MINI_EXPECTED["icons"]
        assert build.stats.to_dict()["labels"] == MINI_EXPECTED["labels"]
        assert dict(build.diagnostics) == MINI_EXPECTED["diagnostics"]
        assert sorted(i.resource_id for i in build.icons) == ["a", "b", "f", "g", "h"]

    def test_r1(self, built):
        _, build = built
        r1 = sample_r1(build.icons, seed=1)
        assert DatasetStats.of(r1).to_dict()["labels"] == MINI_EXPECTED["labels_r1"]
        before = Counter(l for i in build.icons if i.split == "test" for l in i.labels)
        after = Counter(l for i in r1 if i.split == "test" for l in i.labels)
        assert before == after
        for old, new in zip(build.icons, r1):
            assert set(new.labels) <= set(old.labels)

    def test_join_integrity(self, built):
        screens, build = built
        by_id = {s.screen_id: s for s in screens}
        for icon in build.icons:
            boxes = [n.bounds for _, _, n in by_id[icon.screen_id].root.walk()]
            assert icon.bounds in boxes
            assert node_at_path(by_id[icon.screen_id], icon.path).bounds == icon.bounds

    def test_manifest_round_trip(self, built, tmp_path):
        _, build = built
        write_manifest(build.icons, tmp_path / "m.jsonl")
        assert read_manifest(tmp_path / "m.jsonl") == build.icons

    def test_join_by_node_path(self, tmp_path, built):
        screens, _ = built
        (tmp_path / "c.csv").write_text("screenId,nodeId,captions\ns3,0.1,settings|gear\n")
        (tmp_path / "splits").mkdir()
        (tmp_path / "splits" / "test.txt").write_text("s3\n")
        build = build_icon_dataset(screens, tmp_path / "c.csv", tmp_path / "splits")
        assert [(i.resource_id, i.labels) for i in build.icons] == [("h", ("settings", "gear"))]

    def test_empty(self, tmp_path):
        (tmp_path / "c.csv").write_text("screen_id,bounds,captions\n")
        (tmp_path / "s.csv").write_text("")
        build = build_icon_dataset([], tmp_path / "c.csv", tmp_path / "s.csv")
        assert build.icons == [] and build.stats.total_icons == 0 and build.stats.total_labels == 0


def test_read_splits_aliases(tmp_path):
    (tmp_path / "s.csv").write_text("a,training\nb,dev\nc,TEST\n")
    assert read_splits(tmp_path / "s.csv") == {"a": "train", "b": "valid", "c": "test"}
    (tmp_path / "bad.csv").write_text("a,holdout\n")
    with pytest.raises(ValueError):
        read_splits(tmp_path / "bad.csv")


def test_read_captions_trims(tmp_path):
    (tmp_path / "c.csv").write_text('screen_id,bounds,captions\nx,"[1, 2, 3, 4]", a | b ||\n')
    row, = read_captions(tmp_path / "c.csv")
    assert row.bounds == (1, 2, 3, 4) and row.captions == ("a", "b")


def _icon(i, split="train", labels=("a", "b", "c"), rid=None):
    return AnnotatedIcon(f"s{i}", (0, i), BoundingBox(0, 0, 10, 10), split, labels, "ImageButton", rid)


class TestR1:
    def test_deterministic(self):
        icons = [_icon(i) for i in range(20)]
        assert sample_r1(icons, 5) == sample_r1(icons, 5)
        assert all(len(i.labels) == 1 for i in sample_r1(icons, 5))
        assert sample_r1(icons, 5) != sample_r1(icons, 6)

    def test_single_label_and_test_kept(self):
        assert sample_r1([_icon(0, labels=("only",))], 1)[0].labels == ("only",)
        assert sample_r1([_icon(0, "test")], 1)[0].labels == ("a", "b", "c")

    @given(st.lists(st.tuples(st.sampled_from(["train", "valid", "test"]),
                              st.lists(st.sampled_from("abcdef"), min_size=1, max_size=3)), max_size=15),
           st.integers(0, 100))
    def test_stats_additive_and_test_untouched(self, spec, seed):
        icons = [_icon(i, split, tuple(labels)) for i, (split, labels) in enumerate(spec)]
        r1 = sample_r1(icons, seed)
        stats = DatasetStats.of(r1)
        assert stats.total_icons == sum(stats.icons.values()) == len(icons)
        assert stats.total_labels == sum(len(i.labels) for i in r1)
        assert [i.labels for i in icons if i.split == "test"] == [i.labels for i in r1 if i.split == "test"]


class TestFinetuneSubset:
    def test_cap_and_small_classes(self):
        icons = [_icon(i, rid=f"play_btn_{i}") for i in range(40)] + [_icon(100 + i, rid=f"share{i}x")
                                                                        for i in range(3)]
        classify = lambda icon: "play" if icon.resource_id.startswith("play") else "share"
        subset, assigned = sample_finetune_subset(icons, classify, cap=15, seed=3)
        counts = Counter(assigned[i.icon_ref] for i in subset)
        assert counts == {"play": 15, "share": 3}
        again, _ = sample_finetune_subset(icons, classify, cap=15, seed=3)
        assert again == subset

    def test_keyword_table(self):
        table = KeywordClassifier.load()
        assert len(table.classes) == 99 and table.names[-1] == "other"
        assert table(_icon(0, rid="btn_delete")) != "other"
        assert table(_icon(0, rid="zzqx")) == "other"
        assert table(_icon(0, rid=None)) == "other"

    def test_hundred_full_classes(self):
        icons = [_icon(c * 100 + k, rid=f"c{c}") for c in range(100) for k in range(20)]
        subset, _ = sample_finetune_subset(icons, lambda i: i.resource_id, cap=15)
        assert len(subset) == 1500


def test_icon_invariants():
    with pytest.raises(ValueError):
        _icon(0, labels=())
    with pytest.raises(ValueError):
        _icon(0, split="holdout")
