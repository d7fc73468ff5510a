import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("emqb_exporter")

from format_utils import TinyMlp


@pytest.fixture
def tiny_mlp():
    torch.manual_seed(7)
    return TinyMlp()


@pytest.fixture
def calib_16():
    torch.manual_seed(11)
    return torch.randn(40, 16)
