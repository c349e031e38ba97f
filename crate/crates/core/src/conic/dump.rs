//! Plain-text export of programs in the Conic Benchmark Format (CBF v3).
//!
//! Layout: every variable is free (`VAR n 1 / F n`); bounds, rows and cone
//! blocks all become affine constraint blocks `A x + b in K` with
//! `L+` (>= 0), `L=` (= 0), `Q` (standard cone, head first) and `QR`
//! (`2 s t >= ||u||^2`, s and t first). Binaries are listed under `INT`.

use std::fmt::Write;

use super::program::{Affine, ConeBlock, ConicProgram, Sense, VarKind};

struct Block {
    cone: &'static str,
    rows: Vec<Affine>,
}

/// Renders `prog` as CBF text.
pub fn to_cbf(prog: &ConicProgram) -> String {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, v) in prog.vars().iter().enumerate() {
        let x = Affine::var(super::VarId(i));
        if v.lb.is_finite() {
            blocks.push(Block { cone: "L+", rows: vec![x.clone().minus(&Affine::constant(v.lb))] });
        }
        if v.ub.is_finite() {
            blocks.push(Block { cone: "L+", rows: vec![Affine::constant(v.ub).minus(&x)] });
        }
    }
    for row in prog.rows() {
        let lhs = Affine { terms: row.terms.clone(), constant: -row.rhs };
        let (cone, e) = match row.sense {
            Sense::Ge => ("L+", lhs),
            Sense::Le => ("L+", lhs.scale(-1.0)),
            Sense::Eq => ("L=", lhs),
        };
        blocks.push(Block { cone, rows: vec![e] });
    }
    for c in prog.cones() {
        match c {
            ConeBlock::Soc { t, u } => {
                let mut rows = vec![t.clone()];
                rows.extend(u.iter().cloned());
                blocks.push(Block { cone: "Q", rows });
            }
            ConeBlock::RotatedSoc { s, t, u } => {
                let mut rows = vec![s.clone(), t.clone()];
                rows.extend(u.iter().cloned());
                blocks.push(Block { cone: "QR", rows });
            }
        }
    }

    let mut out = String::new();
    let n = prog.num_vars();
    let _ = writeln!(out, "# hubloc conic program: {prog}");
    let _ = writeln!(out, "VER\n3\n");
    let _ = writeln!(out, "OBJSENSE\nMIN\n");
    let _ = writeln!(out, "VAR\n{n} 1\nF {n}\n");
    let ints: Vec<usize> = prog
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    if !ints.is_empty() {
        let _ = writeln!(out, "INT\n{}", ints.len());
        for i in &ints {
            let _ = writeln!(out, "{i}");
        }
        out.push('\n');
    }
    let m: usize = blocks.iter().map(|b| b.rows.len()).sum();
    let _ = writeln!(out, "CON\n{m} {}", blocks.len());
    for b in &blocks {
        let _ = writeln!(out, "{} {}", b.cone, b.rows.len());
    }
    out.push('\n');

    let obj: Vec<(usize, f64)> =
        prog.objective().iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(i, c)| (i, *c)).collect();
    if !obj.is_empty() {
        let _ = writeln!(out, "OBJACOORD\n{}", obj.len());
        for (i, c) in &obj {
            let _ = writeln!(out, "{i} {c:e}");
        }
        out.push('\n');
    }
    if prog.objective_constant != 0.0 {
        let _ = writeln!(out, "OBJBCOORD\n{:e}\n", prog.objective_constant);
    }

    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    let mut r = 0;
    for b in &blocks {
        for e in &b.rows {
            for &(v, c) in &e.terms {
                if c != 0.0 {
                    acoord.push((r, v.0, c));
                }
            }
            if e.constant != 0.0 {
                bcoord.push((r, e.constant));
            }
            r += 1;
        }
    }
    let _ = writeln!(out, "ACOORD\n{}", acoord.len());
    for (r, j, c) in &acoord {
        let _ = writeln!(out, "{r} {j} {c:e}");
    }
    out.push('\n');
    let _ = writeln!(out, "BCOORD\n{}", bcoord.len());
    for (r, c) in &bcoord {
        let _ = writeln!(out, "{r} {c:e}");
    }
    out
}
