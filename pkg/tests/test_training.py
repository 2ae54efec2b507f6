import hashlib
import itertools
import math

import numpy as np
import pytest

from fewtype.backend import LexicalOracle, MaskedLMProvider, SyntheticOracle
from fewtype.config import Hyperparams, load_config
from fewtype.correlation import CorrelationMatrix, init_correlation, load_checkpoint
from fewtype.data import MentionExample, load_dataset, sample_few_shot
from fewtype.errors import ContractError, TransportError
from fewtype.hierarchy import build_hierarchy, parse_label_path
from fewtype.prompts import TemplateSpec
from fewtype.training import (
    Trainer,
    beta_schedule,
    build_augmented_pool,
    predict,
    smooth_label,
    train,
)


def p(s):
    return parse_label_path(s)


class TestSmoothLabel:
    def test_reference_values(self):
        vec = smooth_label(0, 0.1, 4)
        np.testing.assert_allclose(vec, [0.925, 0.025, 0.025, 0.025], atol=1e-12)

    def test_zero_epsilon_one_hot(self):
        np.testing.assert_array_equal(smooth_label(2, 0.0, 4), [0, 0, 1, 0])

    def test_sums_exactly_one(self):
        # exact under compensated summation for any (epsilon, n)
        for eps, n in itertools.product((0.0, 0.05, 0.1, 0.2, 0.3, 0.45), (2, 3, 4, 7, 8, 21, 66)):
            vec = smooth_label(1 % n, eps, n)
            assert math.fsum(vec) == 1.0

    def test_gold_entry_is_maximum(self):
        for eps in (0.0, 0.3, 0.9):
            vec = smooth_label(3, eps, 5)
            assert np.argmax(vec) == 3

    def test_non_gold_entries_symmetric(self):
        vec = smooth_label(1, 0.2, 6)
        others = np.delete(vec, 1)
        assert np.all(others == others[0])

    def test_reference_defaults(self):
        hyper = Hyperparams()
        assert hyper.epsilon == 0.1
        assert hyper.alpha == 0.1
        assert hyper.epochs == 30
        assert hyper.batch_size == 8
        assert hyper.lr == 1e-2
        assert hyper.reg_weight == 1.0
        assert hyper.aug_weight == 1.0
        assert hyper.instances == 5
        assert hyper.shots == 5
        assert hyper.m_scope == "mention"

    def test_bad_epsilon(self):
        with pytest.raises(ContractError):
            smooth_label(0, 1.0, 3)


class TestBetaSchedule:
    def test_reference_points(self):
        assert beta_schedule(15, 30) == 0.0
        assert beta_schedule(30, 30) == 1.0
        assert beta_schedule(24, 30) == 0.6

    def test_zero_through_first_half(self):
        for t in range(1, 16):
            assert beta_schedule(t, 30) == 0.0

    def test_monotone_second_half(self):
        values = [beta_schedule(t, 30) for t in range(16, 31)]
        assert values == sorted(values)
        assert all(0 < v <= 1 for v in values)

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            beta_schedule(0, 30)
        with pytest.raises(ContractError):
            beta_schedule(31, 30)


class TestPredict:
    def setup_method(self):
        tokens = ["[MASK]", "org", "company", "media", "w1", "w2"]
        self.oracle = SyntheticOracle(tokens)
        self.h = build_hierarchy({p("/org"), p("/org/company"), p("/org/media")})
        self.spec = TemplateSpec()

    def test_name_token_distribution_predicts_its_label(self):
        cm = init_correlation(self.h, self.oracle, 0.1)
        ex = MentionExample("e", "the acmeco shares rose", 4, 10, p("/org"))
        prompt_text = "the acmeco shares rose. acmeco is a [MASK]."
        self.oracle.add_rule(prompt_text, 0, self.oracle.probs_from({"company": 1.0}))
        assert predict(cm, self.oracle, self.spec, ex) == p("/org/company")

    def test_uniform_matrix_ties_to_smallest_path(self):
        cm = CorrelationMatrix(np.zeros((3, 6)), self.h.labels, 6)
        ex = MentionExample("e", "the acmeco shares rose", 4, 10, p("/org/media"))
        assert predict(cm, self.oracle, self.spec, ex) == p("/org")


class TestAugmentedPool:
    def make_parts(self, fixtures_dir):
        provider = LexicalOracle.from_file(fixtures_dir / "lexicon.json")
        cfg = load_config(fixtures_dir / "config.json")
        from fewtype.training import load_run_data

        hierarchy, train_ex, dev_ex = load_run_data(cfg)
        cm = init_correlation(hierarchy, provider, 0.1)
        return provider, hierarchy, train_ex, dev_ex, cm

    def test_pool_contents(self, fixtures_dir):
        provider, hierarchy, train_ex, dev_ex, cm = self.make_parts(fixtures_dir)
        pool = build_augmented_pool(
            provider, cm, TemplateSpec(), train_ex,
            epsilon=0.1, instances=5, beam_width=10,
        )
        assert 0 < len(pool) <= 5 * len(train_ex)
        train_surfaces = {ex.mention for ex in train_ex}
        n_labels = len(hierarchy.labels)
        for aug in pool:
            assert aug.instance.surface not in train_surfaces
            # the target's maximum sits on the source example's gold label
            assert float(aug.target.max()) == pytest.approx(1 - 0.1 + 0.1 / n_labels)
            assert aug.instance.surface in aug.prompt.text

    def test_generated_surfaces_are_held_out_entities(self, fixtures_dir):
        # the fixture is built so that, after removing train mentions,
        # the top candidates are exactly the label's dev entities
        provider, hierarchy, train_ex, dev_ex, cm = self.make_parts(fixtures_dir)
        pool = build_augmented_pool(
            provider, cm, TemplateSpec(), train_ex,
            epsilon=0.1, instances=5, beam_width=10,
        )
        dev_surfaces = {ex.mention for ex in dev_ex}
        generated = {aug.instance.surface for aug in pool}
        assert generated == dev_surfaces

    def test_type_scope_caps_per_label(self, fixtures_dir):
        provider, hierarchy, train_ex, dev_ex, cm = self.make_parts(fixtures_dir)
        pool = build_augmented_pool(
            provider, cm, TemplateSpec(), train_ex,
            epsilon=0.1, instances=3, beam_width=10, m_scope="type",
        )
        per_label: dict = {}
        for aug in pool:
            key = aug.instance.source_id.rsplit("-", 1)[0]
            per_label.setdefault(key, set()).add(aug.instance.surface.lower())
        assert all(len(surfaces) <= 3 for surfaces in per_label.values())


class _FlakyProvider(MaskedLMProvider):
    """Delegates to an inner provider, then fails permanently at call N."""

    def __init__(self, inner, fail_at):
        self.inner = inner
        self.fail_at = fail_at
        self.calls = 0

    def vocab(self):
        return self.inner.vocab()

    def tokenize(self, text):
        return self.inner.tokenize(text)

    def detokenize(self, ids):
        return self.inner.detokenize(ids)

    def mask_distributions(self, prompt, filled=None):
        self.calls += 1
        if self.calls >= self.fail_at:
            raise TransportError("synthetic outage")
        return self.inner.mask_distributions(prompt, filled)


class _CountingProvider(_FlakyProvider):
    def __init__(self, inner):
        super().__init__(inner, fail_at=float("inf"))


class TestTrainLoop:
    def small_config(self, fixtures_dir, *extra):
        return load_config(
            fixtures_dir / "config.json", ["hyper.epochs=8", "hyper.batch_size=16", *extra]
        )

    def test_new_loss_zero_before_midpoint(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        result = train(cfg, out_dir=tmp_path / "run")
        for record in result.records:
            if record["beta"] == 0.0:
                assert record["new"] == 0.0
            else:
                assert record["new"] > 0.0

    def test_run_log_determinism(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        train(cfg, out_dir=tmp_path / "a")
        train(cfg, out_dir=tmp_path / "b")
        digest_a = hashlib.sha256((tmp_path / "a" / "runlog.jsonl").read_bytes()).hexdigest()
        digest_b = hashlib.sha256((tmp_path / "b" / "runlog.jsonl").read_bytes()).hexdigest()
        assert digest_a == digest_b

    def test_different_seed_changes_log(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        other = self.small_config(fixtures_dir, "seed=8")
        train(cfg, out_dir=tmp_path / "a")
        train(other, out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "runlog.jsonl").read_bytes() != (
            tmp_path / "b" / "runlog.jsonl"
        ).read_bytes()

    def test_checkpoint_written_and_loadable(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        result = train(cfg, out_dir=tmp_path / "run")
        provider = LexicalOracle.from_file(fixtures_dir / "lexicon.json")
        cm, _, extra = load_checkpoint(tmp_path / "run" / "checkpoint.json", provider.vocab())
        np.testing.assert_array_equal(cm.u, result.matrix.u)
        assert extra["best_epoch"] == result.best_epoch

    def test_transport_failure_saves_resumable_state(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        inner = LexicalOracle.from_file(fixtures_dir / "lexicon.json")
        counter = _CountingProvider(inner)
        train(cfg, provider=counter, out_dir=tmp_path / "full")
        total_calls = counter.calls

        flaky = _FlakyProvider(LexicalOracle.from_file(fixtures_dir / "lexicon.json"),
                               fail_at=int(total_calls * 0.7))
        with pytest.raises(TransportError):
            train(cfg, provider=flaky, out_dir=tmp_path / "broken")
        state = tmp_path / "broken" / "state.json"
        assert state.exists()
        _, opt, extra = load_checkpoint(state, inner.vocab())
        assert 1 <= extra["next_epoch"] <= cfg.hyper.epochs

    def test_resume_reproduces_uninterrupted_run(self, fixtures_dir, tmp_path):
        cfg = self.small_config(fixtures_dir)
        inner = LexicalOracle.from_file(fixtures_dir / "lexicon.json")
        counter = _CountingProvider(inner)
        straight = train(cfg, provider=counter, out_dir=tmp_path / "full")

        flaky = _FlakyProvider(LexicalOracle.from_file(fixtures_dir / "lexicon.json"),
                               fail_at=int(counter.calls * 0.6))
        with pytest.raises(TransportError):
            train(cfg, provider=flaky, out_dir=tmp_path / "broken")
        resumed = train(
            cfg,
            provider=LexicalOracle.from_file(fixtures_dir / "lexicon.json"),
            out_dir=tmp_path / "broken",
            resume_from=tmp_path / "broken" / "state.json",
        )
        np.testing.assert_array_equal(resumed.matrix.u, straight.matrix.u)
        assert resumed.best_epoch == straight.best_epoch

    def test_fixture_reaches_high_dev_accuracy(self, fixtures_dir, tmp_path):
        cfg = load_config(fixtures_dir / "config.json")
        result = train(cfg, out_dir=tmp_path / "run")
        assert result.best_dev_acc >= 0.95

    def test_no_augmentation_stays_low(self, fixtures_dir, tmp_path):
        cfg = load_config(fixtures_dir / "config.json", ["hyper.aug_weight=0.0"])
        result = train(cfg, out_dir=tmp_path / "run")
        assert result.best_dev_acc <= 0.85
        assert all(record["new"] == 0.0 for record in result.records)

    def test_pool_bounded_by_m_times_train(self, fixtures_dir):
        cfg = self.small_config(fixtures_dir)
        from fewtype.training import load_run_data

        hierarchy, train_ex, _ = load_run_data(cfg)
        provider = LexicalOracle.from_file(fixtures_dir / "lexicon.json")
        cm = init_correlation(hierarchy, provider, 0.1)
        pool = build_augmented_pool(
            provider, cm, TemplateSpec(), train_ex,
            epsilon=0.1, instances=5, beam_width=10,
        )
        assert len(pool) <= 5 * len(train_ex)
