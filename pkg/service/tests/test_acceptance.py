"""Service acceptance: the live service must behave like any provider.

The checks reuse the engine's provider conformance suite through its
HTTP client, then drive the engine's prediction path end to end against
the running service.
"""

import numpy as np

from fewtype.backend import HttpProvider, RenderedPrompt
from fewtype.conformance import run_conformance
from fewtype.correlation import init_correlation, map_to_labels
from fewtype.data import MentionExample
from fewtype.hierarchy import build_hierarchy, parse_label_path
from fewtype.prompts import TemplateSpec
from fewtype.training import predict


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] {name}{suffix}")
    assert ok, f"{name}{suffix}"


class TestServiceConformance:
    def test_provider_contract(self, live_server):
        provider = HttpProvider(live_server, timeout=30)
        prompts = [
            RenderedPrompt("paris is a [MASK].", (0,)),
            RenderedPrompt("both [MASK] and [MASK] were mentioned.", (0, 1)),
        ]
        checks = run_conformance(
            provider,
            prompts=prompts,
            tokenize_samples=["paris is nice", "chanel", "acme and globex"],
        )
        report(
            "service passes the provider conformance suite over the wire",
            bool(checks),
            ", ".join(checks),
        )

    def test_distribution_normalization_tolerance(self, live_server):
        provider = HttpProvider(live_server, timeout=30)
        prompt = RenderedPrompt("the [MASK] visited kauai last summer.", (0,))
        dist = provider.mask_distributions(prompt)[0]
        report(
            "wire distributions normalized within 1e-4 with specials zeroed",
            abs(float(dist.sum()) - 1.0) <= 1e-4
            and all(dist[i] == 0.0 for i in provider.vocab().special_ids),
            f"sum deviation {abs(float(dist.sum()) - 1.0):.2e}",
        )


class TestEnginePredictSmoke:
    def test_predict_against_live_service(self, live_server):
        provider = HttpProvider(live_server, timeout=30)
        hierarchy = build_hierarchy(
            {parse_label_path("/city"), parse_label_path("/company"), parse_label_path("/island")}
        )
        cm = init_correlation(hierarchy, provider, alpha=0.1)
        examples = [
            MentionExample("s1", "paris is nice in summer", 0, 5, parse_label_path("/city")),
            MentionExample("s2", "acme was mentioned last summer", 0, 4, parse_label_path("/company")),
        ]
        spec = TemplateSpec()
        labels = [predict(cm, provider, spec, ex) for ex in examples]
        proba = map_to_labels(cm, provider.mask_distributions(
            RenderedPrompt("paris is a [MASK].", (0,))
        )[0])
        report(
            "engine predict runs against the live service without transport errors",
            len(labels) == 2
            and all(label in hierarchy for label in labels)
            and abs(float(np.sum(proba)) - 1.0) < 1e-6,
            ", ".join(str(l) for l in labels),
        )
