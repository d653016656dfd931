"""Synthetic task generator contracts."""

import filecmp

import pytest

from tglink.kg import load_dataset
from tglink.synth import build_structure_task, build_text_task, generate_synthetic


class TestTextTask:
    def test_generated_dir_loads_in_transfer_regime(self, tmp_path):
        out = generate_synthetic("text", 64, 7, str(tmp_path / "d"))
        graph, splits = load_dataset(out, "transfer")
        assert splits.train_entities.isdisjoint(splits.test_entities)
        assert splits.train_entities.isdisjoint(splits.valid_entities)
        assert len(splits.test) > 0

    def test_every_test_entity_unseen(self, tmp_path):
        out = generate_synthetic("text-determined", 64, 7, str(tmp_path / "d"))
        _, splits = load_dataset(out, "transfer")
        assert not (splits.test_entities & splits.train_entities)

    def test_labels_follow_text_alone(self):
        # Every linked pair shares its group token, so the label function is
        # recoverable from descriptions without any edges.
        graph, splits = build_text_task(64, 3)
        for split in (splits.train, splits.valid, splits.test):
            for h, _, t in split:
                grp_h = graph.entity_text[h].split()[-1]
                grp_t = graph.entity_text[t].split()[-1]
                assert grp_h == grp_t

    def test_eval_position_words_seen_in_train(self):
        graph, splits = build_text_task(64, 0)
        train_words = set()
        for e in splits.train_entities:
            train_words.update(graph.entity_text[e].split())
        for e in splits.test_entities:
            pos = graph.entity_text[e].split()[1]
            assert pos in train_words

    def test_too_small_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic("text", 6, 0, str(tmp_path / "d"))


class TestStructureTask:
    def test_description_shuffle_leaves_labels(self):
        # hub_sibling pairs are derivable from attachments alone: the label
        # function never consults the random entity descriptions.
        graph, splits = build_structure_task(64, 7)
        attach = graph.relation_ids["attached_to"]
        sib = graph.relation_ids["hub_sibling"]
        hub_of = {h: t for h, r, t in graph.triples if r == attach}
        for split in (splits.train, splits.valid, splits.test):
            for h, r, t in split:
                if r == sib:
                    assert hub_of[h] == hub_of[t]

    def test_entity_texts_uninformative(self):
        graph, splits = build_structure_task(64, 7)
        attach = graph.relation_ids["attached_to"]
        hub_kind = {}
        for h, r, t in graph.triples:
            if r == attach:
                hub_kind[h] = graph.entity_text[t].split()[-1]
        # Same description tokens appear across kinds: no token determines one.
        token_kinds = {}
        for e, kind in hub_kind.items():
            for tok in graph.entity_text[e].split():
                token_kinds.setdefault(tok, set()).add(kind)
        assert any(len(kinds) > 1 for kinds in token_kinds.values())

    def test_decoy_targets_partner_kind(self):
        from tglink.synth import _kind_word
        graph, splits = build_structure_task(64, 1)
        attach = graph.relation_ids["attached_to"]
        up = graph.relation_ids["decoy_up"]
        down = graph.relation_ids["decoy_down"]
        hub_of, decoy_of = {}, {}
        for h, r, t in graph.triples:
            if r == attach:
                hub_of[h] = t
            elif r in (up, down):
                decoy_of[h] = t
        word_to_kind = {_kind_word(i): i for i in range(30)}
        eval_entities = (splits.valid_entities | splits.test_entities) & set(hub_of)
        assert eval_entities <= set(decoy_of), "eval entities always carry a decoy"
        for e, hub in hub_of.items():
            if e not in decoy_of:
                continue
            a = word_to_kind[graph.entity_text[hub].split()[-1]]
            b = word_to_kind[graph.entity_text[decoy_of[e]].split()[-1]]
            assert {a % 2, b % 2} == {0, 1} and abs(a - b) == 1

    def test_transfer_disjoint(self, tmp_path):
        out = generate_synthetic("structure", 64, 7, str(tmp_path / "d"))
        _, splits = load_dataset(out, "transfer")
        assert not (splits.test_entities & splits.train_entities)

    def test_too_small_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic("structure", 10, 0, str(tmp_path / "d"))


class TestDeterminism:
    @pytest.mark.parametrize("task", ["text", "structure"])
    def test_same_seed_identical_files(self, task, tmp_path):
        a = generate_synthetic(task, 64, 7, str(tmp_path / "a"))
        b = generate_synthetic(task, 64, 7, str(tmp_path / "b"))
        for name in ("train.tsv", "valid.tsv", "test.tsv",
                     "entity2text.tsv", "relation2text.tsv"):
            assert filecmp.cmp(f"{a}/{name}", f"{b}/{name}", shallow=False)

    def test_different_seed_differs(self, tmp_path):
        a = generate_synthetic("structure", 64, 1, str(tmp_path / "a"))
        b = generate_synthetic("structure", 64, 2, str(tmp_path / "b"))
        assert not filecmp.cmp(f"{a}/entity2text.tsv", f"{b}/entity2text.tsv",
                               shallow=False)
