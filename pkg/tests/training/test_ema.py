"""Tests for the parameter EMA."""

import pytest
import torch
from torch import nn

from detail_aligned_vae.core.errors import ShapeError
from detail_aligned_vae.training.ema import EmaState, ema_update


class TestEma:
    """Tests for EmaState and ema_update."""

    def test_hand_value(self) -> None:
        """Test decay 0.5 from 0 towards 2: two updates give 1.5."""
        ema = EmaState({"w": torch.zeros(1)}, decay=0.5)
        live = {"w": torch.full((1,), 2.0)}
        ema_update(ema, live)
        assert ema.shadow["w"].item() == 1.0
        ema_update(ema, live)
        assert ema.shadow["w"].item() == 1.5

    def test_from_module_tracks_trainable_only(self) -> None:
        """Test that frozen parameters are not tracked."""
        model = nn.Sequential(nn.Linear(2, 2), nn.Linear(2, 1))
        model[0].weight.requires_grad_(False)
        ema = EmaState.from_module(model, decay=0.9)
        assert "0.weight" not in ema.shadow
        assert sorted(ema.shadow) == ["0.bias", "1.bias", "1.weight"]
        assert ema.shadow["1.weight"].data_ptr() != model[1].weight.data_ptr()

    def test_copy_to_and_state_dict(self) -> None:
        """Test writing the shadow into a module and prefixing its arrays."""
        model = nn.Linear(2, 1)
        ema = EmaState.from_module(model, decay=0.9)
        for value in ema.shadow.values():
            value.fill_(0.25)
        ema.copy_to(model)
        assert torch.all(model.weight == 0.25)
        assert sorted(ema.state_dict()) == ["ema.bias", "ema.weight"]

    def test_module_update(self) -> None:
        """Test updating from a module's named parameters."""
        model = nn.Linear(1, 1, bias=False)
        with torch.no_grad():
            model.weight.fill_(1.0)
        ema = EmaState.from_module(model, decay=0.75)
        with torch.no_grad():
            model.weight.fill_(5.0)
        ema_update(ema, model)
        assert ema.shadow["weight"].item() == pytest.approx(2.0)

    def test_missing_parameter(self) -> None:
        """Test that a vanished parameter is reported."""
        ema = EmaState({"w": torch.zeros(1)}, decay=0.5)
        with pytest.raises(ShapeError, match="missing"):
            ema_update(ema, {})

    def test_shape_change(self) -> None:
        """Test that a reshaped parameter is reported."""
        ema = EmaState({"w": torch.zeros(1)}, decay=0.5)
        with pytest.raises(ShapeError, match="shape"):
            ema_update(ema, {"w": torch.zeros(2)})

    def test_decay_range(self) -> None:
        """Test that the decay must lie in [0, 1]."""
        with pytest.raises(ValueError, match="decay"):
            EmaState({}, decay=1.5)
