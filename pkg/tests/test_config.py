import json

import pytest

from adcompliance.backends import Provider
from adcompliance.config import ConfigError, load_config


def _write(toy_dir, mutate):
    raw = json.loads((toy_dir / "config.json").read_text())
    mutate(raw)
    path = toy_dir / "edited.json"
    path.write_text(json.dumps(raw))
    return path


def test_toy_config_loads(toy_dir):
    cfg = load_config(toy_dir / "config.json")
    assert cfg.child_models == ["gpt-4.1", "gemini-2.0-flash"] and cfg.mother_model == "gemini-2.5-pro"
    spec = cfg.model("gemini-2.0-flash")
    # mock stand-in keeps the registry prices
    assert spec.provider is Provider.MOCK and (spec.input_rate, spec.output_rate) == (0.15, 3.0)
    assert cfg.dataset == toy_dir / "manifest.jsonl" and cfg.archive == toy_dir / "archive"
    assert len(cfg.suite) == 21 and set(cfg.brands) == {"brightbrew", "peakgear", "lumacare"}
    assert cfg.selection.min_accuracy_floor == 80.0 and cfg.selection.cost_weight == 5.0
    assert cfg.augmentation.seed == 7 and cfg.augmentation.mask == (0.4, 0.4, 0.6, 0.6)
    with pytest.raises(ConfigError):
        cfg.model("nope")


@pytest.mark.parametrize("mutate,needle", [
    (lambda r: r.update(colour="red"), "unknown key"),
    (lambda r: r["retry"].update(retries=3), "retry"),
    (lambda r: r["models"][0].update(price=1), "models[0]"),
    (lambda r: r["augmentation"].update(params={"spin": 3}), "augmentation.params"),
    (lambda r: r["selection"].update(profile="frugal"), "unknown profile"),
    (lambda r: r.update(dataset="missing.jsonl"), "does not exist"),
    (lambda r: r["models"][0].update(fixtures="nope.json"), "does not exist"),
    (lambda r: r["models"][0].pop("fixtures"), "needs a fixtures file"),
    (lambda r: r.update(child_models=["gpt-9"]), "not listed"),
    (lambda r: r.update(parallelism=0), "parallelism"),
    (lambda r: r.update(judgeable=["Logo Size"]), "judgeable"),
    (lambda r: r.update(ocr_threshold=2), "ocr_threshold"),
    (lambda r: r["augmentation"].update(mask=[0.5, 0.5, 0.2, 0.9]), "normalized"),
    (lambda r: r["models"].append({"model_id": "mystery", "provider": "openai"}), "lacks"),
])
def test_config_rejections(toy_dir, mutate, needle):
    with pytest.raises(ConfigError, match=None) as err:
        load_config(_write(toy_dir, mutate))
    assert needle in str(err.value)


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text('{"models": [}')
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")
    bad.write_text("[]")
    with pytest.raises(ConfigError, match="object"):
        load_config(bad)


def test_minimal_config_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{}")
    cfg = load_config(path)
    assert cfg.models == {} and cfg.selection is None and cfg.parallelism == 1
    assert len(cfg.judgeable) == 9
