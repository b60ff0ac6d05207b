"""Smoke test for the `thp` extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke.py`.
"""

import json
import math
import sys

import thp


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    return cond


def main():
    results = []
    cfg = thp.Config()

    b = cfg.budget()
    results.append(check(abs(b["signal_double_pass_db"] - 58.7) < 1e-9, f"signal double pass {b['signal_double_pass_db']:.4f} dB"))
    results.append(check(abs(b["attack_double_pass_db"] - 104.9) < 1e-9, f"attack double pass {b['attack_double_pass_db']:.4f} dB"))
    results.append(check(abs(b["rho"] / 724 - 1) < 0.005, f"rho {b['rho']:.2f}"))

    f = cfg.factors()
    results.append(check(abs(f.theta_attack / math.pi - 0.294) < 0.002 * 0.294, f"theta_l / pi {f.theta_attack / math.pi:.5f}"))
    results.append(check(abs(f.nu - 5.04) < 0.005 * 5.04, f"nu {f.nu:.4f}"))
    results.append(check(abs(f.delta0 / 1.03e-2 - 1) < 0.02, f"delta0 {f.delta0:.4e}"))

    mu = thp.estimate_mu(4.98e6, 323, 60, 8.85e-7)
    results.append(check(abs(mu / 59.7 - 1) < 0.005, f"mu from counts {mu:.2f}"))

    a = thp.readout_error_prob(4.0, math.pi)
    b_ = thp.readout_error_prob(f.nu * 4.0, f.theta_attack)
    results.append(check(abs(a - b_) < 1e-9, f"readout error equal at nu-scaled brightness ({a:.3e})"))
    results.append(check(abs(thp.required_mu(math.pi, a) - 4.0) < 1e-5, "required_mu inverts readout_error_prob"))

    p5 = thp.afterpulse_probability(2e6, 5)
    results.append(check(p5 >= 0.40, f"5-gate afterpulse probability {p5:.3f}"))

    counts = [1000 * math.exp(-i / 5) + 20 for i in range(100)]
    apc, dc, flat = thp.split_histogram(counts, 0.4e-6, 50)
    results.append(check(abs(dc - 2000) < 1 and not flat, f"histogram split apc {apc:.0f} dc {dc:.0f}"))

    r = cfg.simulate(frames=3000, seed=1)
    results.append(check(r.breach and 0.06 < r.qber < 0.09, f"reference attack {r!r}"))
    again = cfg.simulate(frames=3000, seed=1, workers=1)
    results.append(check(again.to_json() == r.to_json(), "same seed, different worker count, same report"))
    s = cfg.simulate(frames=3000, seed=1, scaling="signal")
    results.append(check(not s.breach and s.qber > 0.08, f"signal-wavelength attack {s!r}"))

    round_trip = thp.Config.from_json(cfg.to_json())
    results.append(check(json.loads(round_trip.to_json()) == json.loads(cfg.to_json()), "config JSON round trip"))
    try:
        thp.Config.from_json('{"frame": {"n_slots": -1}}')
        results.append(check(False, "bad config rejected"))
    except ValueError as e:
        results.append(check("n_slots" in str(e), f"bad config rejected: {e}"))

    print(f"{sum(results)}/{len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
