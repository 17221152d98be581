//! Standalone matplotlib scripts written next to each run's data.

use crate::config::Experiment;

const PRELUDE: &str = r#"import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(sys.argv[0]))


def read(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def column(rows, key, cast=float):
    return [cast(r[key]) for r in rows]


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name), dpi=150)
    print("wrote", name)

"#;

const ANNULUS: &str = r#"rows = read("annulus_errors.csv")
fig, ax = plt.subplots()
for eps in sorted({r["eps"] for r in rows}, key=float, reverse=True):
    sub = [r for r in rows if r["eps"] == eps]
    ax.loglog(column(sub, "h"), column(sub, "max_error"), "o-", label=f"eps = {eps}")
    ax.loglog(column(sub, "h"), column(sub, "bound"), "k:", lw=0.8)
ax.set_xlabel("h")
ax.set_ylabel("max |T - Theta|")
ax.legend()
save(fig, "annulus_errors.png")
"#;

const RATE: &str = r#"rows = read("errors.csv")
fig, ax = plt.subplots()
eps = column(rows, "eps")
for key in ("h1_rho", "l2_rho", "hb_rho", "hperp_rho"):
    ax.loglog(eps, column(rows, key), "o-", label=key)
ax.set_xlabel("eps")
ax.set_ylabel("error norm")
ax.legend()
save(fig, "errors.png")

profile = read("profile.csv")
fig, ax = plt.subplots()
ax.plot(column(profile, "psi"), column(profile, "theta"))
ax.set_xlabel("psi")
ax.set_ylabel("Theta")
save(fig, "profile.png")
"#;

const PERTURBED: &str = r#"rows = read("errors.csv")
fig, ax = plt.subplots()
for key in sorted({(r["amplitude"], r["a_exponent"]) for r in rows}):
    sub = [r for r in rows if (r["amplitude"], r["a_exponent"]) == key]
    ax.loglog(column(sub, "eps"), column(sub, "h1_rho"), "o-", label=f"A = {key[0]}, a = {key[1]}")
ax.set_xlabel("eps")
ax.set_ylabel("h1_rho")
ax.legend()
save(fig, "errors.png")

if os.path.exists(os.path.join(HERE, "diagnostic.csv")):
    diag = read("diagnostic.csv")
    fig, ax = plt.subplots()
    colors = ["tab:blue" if r["diophantine"] == "true" else "tab:red" for r in diag]
    ax.scatter(column(diag, "iota"), column(diag, "mean_abs_rho"), c=colors, s=12)
    ax.set_xlabel("iota")
    ax.set_ylabel("surface mean |rho|")
    save(fig, "diagnostic.png")
"#;

const DIOPHANTINE: &str = r#"rows = read("measures.csv")
fig, ax = plt.subplots()
m = column(rows, "M")
ax.loglog(m, column(rows, "excluded_measure"), "o-", label="measure")
ax.loglog(m, column(rows, "bound"), "k:", label="bound")
ax.loglog(m, [1.0 / x for x in m], "k--", lw=0.8, label="1/M")
ax.set_xlabel("M")
ax.legend()
save(fig, "measures.png")
"#;

const MDE: &str = r#"rows = read("mde.csv")
fig, ax = plt.subplots()
ax.semilogy(column(rows, "source", int), column(rows, "rel_error"), "o")
ax.set_xlabel("source")
ax.set_ylabel("relative symbol error")
save(fig, "mde.png")

spec = read("spectrum_w0.csv")
fig, ax = plt.subplots()
amp = [(float(r["re"]) ** 2 + float(r["im"]) ** 2) ** 0.5 for r in spec]
sc = ax.scatter(column(spec, "m", int), column(spec, "n", int), c=amp, s=20)
fig.colorbar(sc, label="|w_mn|")
ax.set_xlabel("m")
ax.set_ylabel("n")
save(fig, "spectrum_w0.png")
"#;

const NONINTEG: &str = r#"rows = read("volumes.csv")
fig, ax = plt.subplots()
for amp in sorted({r["amplitude"] for r in rows}, key=float):
    sub = [r for r in rows if r["amplitude"] == amp]
    ax.semilogx(column(sub, "eps"), column(sub, "fraction"), "o-", label=f"A = {amp}")
ax.set_xlabel("eps")
ax.set_ylabel("volume fraction")
ax.legend()
save(fig, "volumes.png")
"#;

const SELFTEST: &str = r#"rows = read("selftest.csv")
for r in rows:
    print(f"{r['status']:4}  {r['model']:18} {r['check']:40} {r['value']}")
"#;

/// Script for `experiment`, reading the CSVs the experiment writes.
pub fn script(experiment: Experiment) -> String {
    let body = match experiment {
        Experiment::Annulus2d => ANNULUS,
        Experiment::Channel2d | Experiment::TorusIntegrable => RATE,
        Experiment::TorusPerturbed => PERTURBED,
        Experiment::DiophantineScan => DIOPHANTINE,
        Experiment::MdeDemo => MDE,
        Experiment::NonintegVolume => NONINTEG,
        Experiment::GeometrySelftest => SELFTEST,
    };
    format!("{PRELUDE}\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_has_a_script() {
        for e in Experiment::ALL {
            let s = script(e);
            assert!(s.starts_with("import csv"));
            assert!(s.contains("read(\""));
        }
    }
}
