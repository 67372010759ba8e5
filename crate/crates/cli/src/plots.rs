//! Writes a standalone matplotlib script for the CSVs found in a result
//! directory. Nothing here runs Python.

use crate::error::CliError;
use std::path::{Path, PathBuf};

pub const SCRIPT: &str = "plots.py";

const PREAMBLE: &str = r#"#!/usr/bin/env python3
# Generated by `roughflow plots`. Run from anywhere; paths are relative to this file.
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def columns(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: [float(r[key]) for r in rows] for key in rows[0]} if rows else {}

"#;

const QDELTA: &str = r#"
# Q_delta against log(1/|delta|)
c = columns("qdelta.csv")
x = [math.log(1.0 / d) for d in c["delta"]]
fig, ax = plt.subplots()
ax.semilogx(x, c["Q"], "o-", label="Q")
ax.set_xlabel("log(1/|delta|)")
ax.set_ylabel("Q")
ax.legend()
fig.savefig(os.path.join(HERE, "qdelta.png"), dpi=150)
"#;

const SCAN: &str = r#"
# turning-time separation against N, log-log with least-squares line
c = columns("scan.csv")
lx = [math.log(n) for n in c["N"]]
ly = [math.log(s) for s in c["separation"]]
mx, my = sum(lx) / len(lx), sum(ly) / len(ly)
slope = sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / sum((a - mx) ** 2 for a in lx)
icpt = my - slope * mx
fig, ax = plt.subplots()
ax.loglog(c["N"], c["separation"], "o", label="|t0 - t0_delta|")
ax.loglog(c["N"], [math.exp(icpt) * n**slope for n in c["N"]], "-", label=f"fit, slope {slope:.3f}")
ax.set_xlabel("N")
ax.set_ylabel("separation")
ax.legend()
fig.savefig(os.path.join(HERE, "scan.png"), dpi=150)
"#;

const CAUCHY: &str = r#"
# distance between consecutive spectral truncations
c = columns("cauchy.csv")
fig, ax = plt.subplots()
ax.semilogy(c["n_hi"], c["distance"], "o-")
ax.set_xscale("log", base=2)
ax.set_xlabel("upper cutoff")
ax.set_ylabel("ensemble-mean distance")
fig.savefig(os.path.join(HERE, "cauchy.png"), dpi=150)
"#;

const TRAJECTORY: &str = r#"
# first position and velocity component against time
c = columns("trajectory.csv")
fig, ax = plt.subplots()
ax.plot(c["t"], c["x_1"], label="x_1")
ax.plot(c["t"], c["v_1"], label="v_1")
ax.set_xlabel("t")
ax.legend()
fig.savefig(os.path.join(HERE, "trajectory.png"), dpi=150)
"#;

/// Stanzas in the order they appear in the script.
const STANZAS: [(&str, &str); 4] = [
    ("qdelta.csv", QDELTA),
    ("scan.csv", SCAN),
    ("cauchy.csv", CAUCHY),
    ("trajectory.csv", TRAJECTORY),
];

/// Script text for `dir`, with one stanza per recognised CSV present.
pub fn script_for(dir: &Path) -> (String, usize) {
    let mut text = PREAMBLE.to_string();
    let mut count = 0;
    for (file, stanza) in STANZAS {
        if dir.join(file).is_file() {
            text.push_str(stanza);
            count += 1;
        }
    }
    (text, count)
}

pub fn emit_plots(dir: &Path) -> Result<(PathBuf, usize), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("result directory {} does not exist", dir.display())));
    }
    let (text, count) = script_for(dir);
    let path = dir.join(SCRIPT);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok((path, count))
}
