import pytest

from unisac.config import ConfigError, SystemConfig, dump_config, parse_config, per_user_energy, powers_for_ebn0


def test_parse_round_trip():
    cfg = SystemConfig(n=512, k_c=3, ebn0_db=7.5)
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config("n = 2048  # frame\n\n# comment\nm=4") == SystemConfig(n=2048, m=4)


def test_parse_errors_listed():
    with pytest.raises(ConfigError) as err:
        parse_config("bogus = 1\nn = abc\nnoequals")
    assert len(err.value.problems) == 3


def test_validation_collects_all_problems():
    with pytest.raises(ConfigError) as err:
        SystemConfig(n=1000, s_c=3, s_s=7, noise_var=-1)
    assert len(err.value.problems) >= 3


def test_digest_stable_and_sensitive():
    assert SystemConfig().digest() == SystemConfig().digest()
    assert SystemConfig().digest() != SystemConfig(seed=1).digest()


@pytest.mark.parametrize("s_c,s_s,ratio", [(1, 1, 1.0), (2, 1, 1.0), (1, 4, 1.0), (4, 2, 3.0)])
def test_powers_realize_target_energy(s_c, s_s, ratio):
    cfg = SystemConfig(n=1024, k_c=7, k_s=5, s_c=s_c, s_s=s_s, power_ratio=ratio, noise_var=0.3)
    p_c, p_s = powers_for_ebn0(cfg, 12.0)
    e = per_user_energy(p_c, p_s, cfg.k_c, cfg.k_s, cfg.n_c, cfg.n_s, cfg.noise_var)
    assert e == pytest.approx(10 ** 1.2)
    assert p_s * cfg.n_s == pytest.approx(ratio * p_c * cfg.n_c)
