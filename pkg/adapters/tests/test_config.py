import pytest

from modeladapters import AdapterConfig


class TestRecipeDefaults:
    def test_supported_recipe_verbatim(self):
        cfg = AdapterConfig()
        assert cfg.optimizer == "adamw"
        assert cfg.learning_rate == 2e-5
        assert cfg.weight_decay == 0.7
        assert cfg.batch_size == 32
        assert cfg.lr_schedule == "cosine"
        assert cfg.epochs == 50

    def test_echo_reports_the_recipe(self):
        echo = AdapterConfig().echo()
        assert echo["optimizer"] == "adamw"
        assert echo["learning_rate"] == 2e-5
        assert echo["weight_decay"] == 0.7
        assert echo["batch_size"] == 32
        assert echo["lr_schedule"] == "cosine"
        assert echo["epochs"] == 50

    def test_overrides(self):
        cfg = AdapterConfig().with_overrides(epochs=1, seed=9)
        assert (cfg.epochs, cfg.seed) == (1, 9)
        assert cfg.learning_rate == 2e-5


class TestValidation:
    def test_rejects_unknown_optimizer(self):
        with pytest.raises(ValueError, match="optimizer"):
            AdapterConfig(optimizer="sgd")

    def test_rejects_unknown_schedule(self):
        with pytest.raises(ValueError, match="schedule"):
            AdapterConfig(lr_schedule="step")

    def test_rejects_bad_numbers(self):
        with pytest.raises(ValueError):
            AdapterConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            AdapterConfig(weight_decay=-0.1)
        with pytest.raises(ValueError):
            AdapterConfig(batch_size=0)
        with pytest.raises(ValueError):
            AdapterConfig(epochs=0)

    def test_rejects_template_without_placeholder(self):
        with pytest.raises(ValueError, match="placeholder"):
            AdapterConfig(prompt_template="no slot")

    def test_rejects_unknown_augmentation(self):
        with pytest.raises(ValueError, match="augmentations"):
            AdapterConfig(augmentations=("mixup",))
