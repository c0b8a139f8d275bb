import json

import pytest

from ocgt import cli


def base_run_config(**overrides):
    cfg = {
        "schema_version": 1,
        "seeds": [0, 1],
        "T": 6,
        "eta": 0.05,
        "alpha_x": 0.5,
        "alpha_y": 0.5,
        "topology": {"kind": "ring", "n": 4},
        "loss": {"kind": "quadratic", "dim": 2, "seed": 3},
        "algorithms": [
            {"name": "full", "feedback": "full", "compressor": "identity"},
            {
                "name": "bandit",
                "feedback": "bandit",
                "compressor": "quant:s=5",
                "smoothing": {"kind": "decaying", "value": 0.9},
            },
        ],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def test_run_produces_csv_and_sidecar(tmp_path):
    path = write_config(tmp_path, base_run_config())
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(path), "--out", str(out)])
    assert rc == 0
    for name in ("full", "bandit"):
        for seed in (0, 1):
            csv_path = out / f"{name}_seed{seed}.csv"
            assert len(csv_path.read_text().splitlines()) == 7  # header + T rows
            sidecar = json.loads((out / f"{name}_seed{seed}.json").read_text())
            assert sidecar["config"]["seeds"] == [seed]


def test_run_sidecar_roundtrips_byte_identically(tmp_path):
    path = write_config(tmp_path, base_run_config())
    out1 = tmp_path / "a"
    cli.main(["run", "--config", str(path), "--out", str(out1)])
    out2 = tmp_path / "b"
    rc = cli.main(
        ["run", "--config", str(out1 / "bandit_seed1.json"), "--out", str(out2)]
    )
    assert rc == 0
    assert (out2 / "bandit_seed1.csv").read_bytes() == (
        out1 / "bandit_seed1.csv"
    ).read_bytes()


def test_run_zero_rounds_header_only(tmp_path):
    cfg = base_run_config(T=0, seeds=[0])
    cfg["algorithms"] = cfg["algorithms"][:1]
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 0
    assert len((out / "full_seed0.csv").read_text().splitlines()) == 1


def test_run_divergence_exits_nonzero(tmp_path, capsys):
    cfg = base_run_config(T=100, seeds=[0], eta=0.9)
    cfg["loss"] = {"kind": "quadratic", "dim": 2, "seed": 3, "eig_min": 5.0, "eig_max": 5.0}
    cfg["algorithms"] = [{"name": "full", "feedback": "full", "compressor": "identity"}]
    path = write_config(tmp_path, cfg)
    rc = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "divergence" in capsys.readouterr().err


def test_malformed_configs_rejected(tmp_path, capsys):
    cfg = base_run_config()
    cfg["etaa"] = 0.1  # typo: unknown key
    path = write_config(tmp_path, cfg)
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "unknown keys" in capsys.readouterr().err

    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "schema_version": 1,\n  oops\n}\n')
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert ":3:" in capsys.readouterr().err  # line-anchored parse error

    cfg = base_run_config(schema_version=99)
    path2 = write_config(tmp_path, cfg, "v.json")
    assert cli.main(["run", "--config", str(path2), "--out", str(tmp_path / "o")]) == 2

    cfg = base_run_config(seeds=[0, 0])
    path3 = write_config(tmp_path, cfg, "s.json")
    assert cli.main(["run", "--config", str(path3), "--out", str(tmp_path / "o")]) == 2


def base_sweep_config(**overrides):
    cfg = {
        "schema_version": 1,
        "seeds": [0],
        "T": 5,
        "eta": 0.05,
        "alpha_x": 0.5,
        "alpha_y": 0.5,
        "topology": {"kind": "ring", "n": 3},
        "loss": {"kind": "quadratic", "dim": 16, "seed": 4},
        "feedback": "full",
        "compressors": ["identity", "quant:s=5", "topk:k=2"],
    }
    cfg.update(overrides)
    return cfg


def test_sweep_aggregates_and_orders_bits(tmp_path):
    path = write_config(tmp_path, base_sweep_config())
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("compressor,seed,bits_total")
    rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
    bits = {k: int(v[2]) for k, v in rows.items()}
    assert bits["identity"] == max(bits.values())
    # quantizer payload is at least 4x smaller per round for m = 16
    assert bits["identity"] >= 4 * bits["quant:s=5"]


def test_sweep_empty_axis_rejected(tmp_path, capsys):
    path = write_config(tmp_path, base_sweep_config(compressors=[]))
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "non-empty" in capsys.readouterr().err


def test_sweep_deterministic_across_workers(tmp_path):
    cfg = base_sweep_config(seeds=[0, 1], feedback="stochastic")
    cfg["loss"]["noise_std"] = 0.1
    path = write_config(tmp_path, cfg)
    out1, out2 = tmp_path / "w1", tmp_path / "w4"
    cli.main(["sweep", "--config", str(path), "--out", str(out1), "--workers", "1"])
    cli.main(["sweep", "--config", str(path), "--out", str(out2), "--workers", "4"])
    for name in [p.name for p in out1.iterdir()]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_certify_outputs_and_continues_past_invalid(tmp_path):
    cfg = {
        "schema_version": 1,
        "instances": [
            {
                "L": 2.0, "mu": 0.5, "m": 5, "n": 5, "omega": 0.5,
                "rho_eta": 0.6, "alpha_x": 0.9, "alpha_y": 0.9,
                "tau_x": 1.25, "tau_y": 1.25,
            },
            # tau = 2 with alpha = 0.5 gives b_x = 1.5 >= 1: invalid
            {"L": 2.0, "mu": 0.5, "m": 5, "n": 5, "omega": 0.5, "rho_eta": 0.6},
        ],
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert cli.main(["certify", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "certification.csv").read_text().splitlines()
    assert len(lines) == 5  # header + 2 instances x 2 variants
    good = [ln for ln in lines[1:] if ln.startswith("0,")]
    bad = [ln for ln in lines[1:] if ln.startswith("1,")]
    assert all(",True," in ln for ln in good)
    assert all(",False," in ln and "b_x" in ln for ln in bad)


def test_certify_empty_instances_header_only(tmp_path):
    path = write_config(tmp_path, {"schema_version": 1, "instances": []})
    out = tmp_path / "out"
    assert cli.main(["certify", "--config", str(path), "--out", str(out)]) == 0
    assert len((out / "certification.csv").read_text().splitlines()) == 1


def test_seed_override(tmp_path):
    cfg = base_run_config()
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    rc = cli.main(
        ["run", "--config", str(path), "--out", str(out), "--seed-override", "42"]
    )
    assert rc == 0
    assert (out / "full_seed42.csv").exists()
    assert not (out / "full_seed0.csv").exists()
