//! Zero-level-set extraction and Hausdorff distances between interfaces.
//!
//! In d = 2 the level set is a set of segments from marching squares on the
//! lattice of cell centers; in d = 3 it is a triangle soup from a fixed
//! six-tetrahedra decomposition of each lattice cube (marching tetrahedra),
//! which needs no ambiguous-case table. Ambiguous marching-squares cells
//! (5 and 10) are resolved as if the cell center were negative, separating
//! the positive corners.

use thiserror::Error;

use crate::field::Field;

#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error("level set is empty")]
    Empty,
    #[error("cannot compare level sets of different dimensions")]
    DimensionMismatch,
}

/// Extracted zero level set.
#[derive(Debug, Clone)]
pub enum LevelSet {
    Segments { spacing: f64, segments: Vec<[[f64; 2]; 2]> },
    Triangles { spacing: f64, triangles: Vec<[[f64; 3]; 3]> },
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        match self {
            LevelSet::Segments { segments, .. } => segments.is_empty(),
            LevelSet::Triangles { triangles, .. } => triangles.is_empty(),
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            LevelSet::Segments { spacing, .. } => *spacing,
            LevelSet::Triangles { spacing, .. } => *spacing,
        }
    }

    /// Dense point sample at the given spacing.
    pub fn sample_points(&self, step: f64) -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        match self {
            LevelSet::Segments { segments, .. } => {
                for seg in segments {
                    let dx = seg[1][0] - seg[0][0];
                    let dy = seg[1][1] - seg[0][1];
                    let len = (dx * dx + dy * dy).sqrt();
                    let n = (len / step).ceil().max(1.0) as usize;
                    for i in 0..=n {
                        let t = i as f64 / n as f64;
                        pts.push([seg[0][0] + t * dx, seg[0][1] + t * dy, 0.0]);
                    }
                }
            }
            LevelSet::Triangles { triangles, .. } => {
                for tri in triangles {
                    let e1: Vec<f64> = (0..3).map(|a| tri[1][a] - tri[0][a]).collect();
                    let e2: Vec<f64> = (0..3).map(|a| tri[2][a] - tri[0][a]).collect();
                    let l1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let l2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let n = ((l1.max(l2)) / step).ceil().max(1.0) as usize;
                    for i in 0..=n {
                        for j in 0..=(n - i) {
                            let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                            pts.push([
                                tri[0][0] + u * e1[0] + v * e2[0],
                                tri[0][1] + u * e1[1] + v * e2[1],
                                tri[0][2] + u * e1[2] + v * e2[2],
                            ]);
                        }
                    }
                }
            }
        }
        pts
    }

    /// CSV point list; the header names the step and ε of the snapshot.
    pub fn write_csv(&self, path: &std::path::Path, step: usize, eps: f64) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# step={step} eps={eps}")?;
        match self {
            LevelSet::Segments { segments, .. } => {
                writeln!(w, "segment,x0,x1")?;
                for (i, s) in segments.iter().enumerate() {
                    writeln!(w, "{i},{},{}", s[0][0], s[0][1])?;
                    writeln!(w, "{i},{},{}", s[1][0], s[1][1])?;
                }
            }
            LevelSet::Triangles { triangles, .. } => {
                writeln!(w, "triangle,x0,x1,x2")?;
                for (i, t) in triangles.iter().enumerate() {
                    for p in t {
                        writeln!(w, "{i},{},{},{}", p[0], p[1], p[2])?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn crossing(pa: f64, pb: f64, va: f64, vb: f64) -> f64 {
    pa + va / (va - vb) * (pb - pa)
}

/// Marching squares over the cell-center lattice.
fn marching_squares(x: &Field) -> Vec<[[f64; 2]; 2]> {
    let grid = x.grid();
    let n = grid.points_per_axis();
    let vals = x.values();
    let pos = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut segments = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            // corners counterclockwise: c0 = (i,j), c1 = (i+1,j),
            // c2 = (i+1,j+1), c3 = (i,j+1); the first axis is x0.
            let v = [
                vals[i * n + j],
                vals[(i + 1) * n + j],
                vals[(i + 1) * n + j + 1],
                vals[i * n + j + 1],
            ];
            let p = [
                [pos(i), pos(j)],
                [pos(i + 1), pos(j)],
                [pos(i + 1), pos(j + 1)],
                [pos(i), pos(j + 1)],
            ];
            let mut case = 0usize;
            for (b, vv) in v.iter().enumerate() {
                if *vv > 0.0 {
                    case |= 1 << b;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // edge midpoints by linear interpolation; edge e connects
            // corner e and corner (e+1) % 4
            let edge = |e: usize| -> [f64; 2] {
                let (a, b) = (e, (e + 1) % 4);
                [
                    crossing(p[a][0], p[b][0], v[a], v[b]),
                    crossing(p[a][1], p[b][1], v[a], v[b]),
                ]
            };
            let mut push = |ea: usize, eb: usize| segments.push([edge(ea), edge(eb)]);
            match case {
                1 | 14 => push(3, 0),
                2 | 13 => push(0, 1),
                3 | 12 => push(3, 1),
                4 | 11 => push(1, 2),
                6 | 9 => push(0, 2),
                7 | 8 => push(2, 3),
                5 => {
                    // positive corners c0, c2 separated
                    push(3, 0);
                    push(1, 2);
                }
                10 => {
                    // positive corners c1, c3 separated
                    push(0, 1);
                    push(2, 3);
                }
                _ => unreachable!(),
            }
        }
    }
    segments
}

/// Fixed six-tetrahedra split of the unit cube sharing the main diagonal
/// (corner 0 to corner 7; corner bit b set means +1 along axis b).
const CUBE_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

fn marching_tets(x: &Field) -> Vec<[[f64; 3]; 3]> {
    let grid = x.grid();
    let n = grid.points_per_axis();
    let vals = x.values();
    let pos = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut tris = Vec::new();
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            for k in 0..n - 1 {
                let corner = |b: usize| -> ([f64; 3], f64) {
                    let (di, dj, dk) = (b & 1, (b >> 1) & 1, (b >> 2) & 1);
                    (
                        [pos(i + di), pos(j + dj), pos(k + dk)],
                        vals[idx(i + di, j + dj, k + dk)],
                    )
                };
                for tet in &CUBE_TETS {
                    let c: Vec<([f64; 3], f64)> = tet.iter().map(|&b| corner(b)).collect();
                    let mut inside = Vec::new();
                    let mut outside = Vec::new();
                    for (m, (_, v)) in c.iter().enumerate() {
                        if *v > 0.0 {
                            inside.push(m);
                        } else {
                            outside.push(m);
                        }
                    }
                    let cut = |a: usize, b: usize| -> [f64; 3] {
                        let (pa, va) = (&c[a].0, c[a].1);
                        let (pb, vb) = (&c[b].0, c[b].1);
                        [
                            crossing(pa[0], pb[0], va, vb),
                            crossing(pa[1], pb[1], va, vb),
                            crossing(pa[2], pb[2], va, vb),
                        ]
                    };
                    match (inside.len(), outside.len()) {
                        (1, 3) => {
                            let a = inside[0];
                            tris.push([cut(a, outside[0]), cut(a, outside[1]), cut(a, outside[2])]);
                        }
                        (3, 1) => {
                            let a = outside[0];
                            tris.push([cut(inside[0], a), cut(inside[1], a), cut(inside[2], a)]);
                        }
                        (2, 2) => {
                            let q = [
                                cut(inside[0], outside[0]),
                                cut(inside[0], outside[1]),
                                cut(inside[1], outside[1]),
                                cut(inside[1], outside[0]),
                            ];
                            tris.push([q[0], q[1], q[2]]);
                            tris.push([q[0], q[2], q[3]]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    tris
}

/// Extract the zero level set `Γ = {x : X(x) = 0}` by sign-change
/// interpolation; an empty set is a valid result.
pub fn zero_level_set(x: &Field) -> LevelSet {
    let spacing = x.grid().spacing();
    match x.grid().dim() {
        2 => LevelSet::Segments { spacing, segments: marching_squares(x) },
        _ => LevelSet::Triangles { spacing, triangles: marching_tets(x) },
    }
}

fn directed_hausdorff(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for p in from {
        let mut best = f64::INFINITY;
        for q in to {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d2 < best {
                best = d2;
            }
        }
        worst = worst.max(best);
    }
    worst.sqrt()
}

/// Symmetric Hausdorff distance via dense point sampling at half the
/// coarser grid spacing.
pub fn hausdorff(a: &LevelSet, b: &LevelSet) -> Result<f64, LevelSetError> {
    if a.is_empty() || b.is_empty() {
        return Err(LevelSetError::Empty);
    }
    let seg_a = matches!(a, LevelSet::Segments { .. });
    let seg_b = matches!(b, LevelSet::Segments { .. });
    if seg_a != seg_b {
        return Err(LevelSetError::DimensionMismatch);
    }
    let step = 0.5 * a.spacing().min(b.spacing());
    let pa = a.sample_points(step);
    let pb = b.sample_points(step);
    Ok(directed_hausdorff(&pa, &pb).max(directed_hausdorff(&pb, &pa)))
}

/// Polyline approximation of a circle, usable as a reference interface.
pub fn circle_segments(center: [f64; 2], radius: f64, arcs: usize) -> LevelSet {
    let segments = (0..arcs)
        .map(|i| {
            let t0 = 2.0 * std::f64::consts::PI * i as f64 / arcs as f64;
            let t1 = 2.0 * std::f64::consts::PI * (i + 1) as f64 / arcs as f64;
            [
                [center[0] + radius * t0.cos(), center[1] + radius * t0.sin()],
                [center[0] + radius * t1.cos(), center[1] + radius * t1.sin()],
            ]
        })
        .collect();
    LevelSet::Segments { spacing: 2.0 * std::f64::consts::PI * radius / arcs as f64, segments }
}
