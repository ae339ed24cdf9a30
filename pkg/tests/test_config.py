import pytest

from deconv_ht.config import ConfigError, parse_config
from deconv_ht.deconvolve import Method
from deconv_ht.kernels import ShiftedBinomial, TruncatedGeometric


def test_defaults():
    cfg = parse_config("")
    assert isinstance(cfg.kernel, TruncatedGeometric) and cfg.kernel.m0 == 4
    assert len(cfg.grid) == 46
    assert cfg.fit.method is Method.MOMENTS
    assert cfg.frame is None and not cfg.joint
    assert cfg.simulate.m0s == [4, 5, 6, 7] and cfg.simulate.I == 10000


def test_full_document():
    cfg = parse_config("""
[Kernel]
Variant = shifted_binomial
n = 3
grid_start = 0.2
grid_step = 0.4
grid_end = 1.0

[population]
N = 5000
I = 1000

[fit]
method = mle
covariance_model = cd
mle_iterations = 3
joint = yes

[calibration]
F = 0.52

[bootstrap]
K = 50
seed = 11

[output]
format = text
path = out.txt
""")
    assert isinstance(cfg.kernel, ShiftedBinomial)
    assert list(cfg.grid.points) == [0.2, 0.6, 1.0]
    assert cfg.frame.inflation == 5
    assert cfg.fit.mle_iterations == 3 and cfg.joint
    assert cfg.calibration == {"F": 0.52}
    assert (cfg.bootstrap_K, cfg.bootstrap_seed) == (50, 11)
    assert cfg.output_format == "text" and cfg.output_path == "out.txt"


@pytest.mark.parametrize("text, fragment", [
    ("[kernel]\nm0 = 4\ncolour = red\n", "line 3: [kernel] colour"),
    ("[nonsense]\nx = 1\n", "line 1: [nonsense]"),
    ("[kernel]\nm0 = four\n", "line 2: [kernel] m0"),
    ("[kernel]\ngrid_start = 0.9\ngrid_step = 0.1\ngrid_end = 0.2\n", "grid_start"),
    ("[kernel]\ngrid_start = 0.1\n", "go together"),
    ("[bootstrap]\nK = 0\n", "K must be"),
    ("[simulate]\nreps = 0\n", "reps must be"),
    ("[calibration]\nF = 1.5\n", "proportion"),
    ("[fit]\nmle_iterations = 0\n", "mle_iterations"),
    ("[kernel]\nvariant = poisson\n", "unknown variant"),
    ("[output]\nformat = xml\n", "format"),
    ("[kernel]\nm0 = 4\nM0 = 5\n", "duplicate key"),
])
def test_errors(text, fragment):
    with pytest.raises(ConfigError, match=".*" + fragment.replace("[", r"\[").replace("]", r"\]")):
        parse_config(text)
