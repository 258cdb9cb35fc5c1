//! Built-in problem definitions.

use std::f64::consts::PI;

use crate::assembly::MaterialParams;
use crate::error::Result;
use crate::mesh::{
    contact_square_tags, unit_square_mesh_tagged, BoundaryTags, DisplacementTag, Mesh, Point,
    PressureTag,
};

/// Which built-in problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ProblemKind {
    /// unit square pressed onto a curved obstacle from below
    #[default]
    #[serde(rename = "contact-square", alias = "paper-section-6")]
    ContactSquare,
    /// smooth sine-product solution, clamped on the whole boundary, no contact
    #[serde(rename = "manufactured")]
    Manufactured,
}

/// `A sin(a pi x) sin(b pi y)` with exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineProduct {
    pub amplitude: f64,
    pub a: f64,
    pub b: f64,
}

impl SineProduct {
    pub fn value(&self, x: Point) -> f64 {
        self.amplitude * (self.a * PI * x[0]).sin() * (self.b * PI * x[1]).sin()
    }

    pub fn grad(&self, x: Point) -> [f64; 2] {
        let (ka, kb) = (self.a * PI, self.b * PI);
        let (sx, cx) = (ka * x[0]).sin_cos();
        let (sy, cy) = (kb * x[1]).sin_cos();
        [self.amplitude * ka * cx * sy, self.amplitude * kb * sx * cy]
    }

    /// `(xx, xy, yy)`
    pub fn hess(&self, x: Point) -> [f64; 3] {
        let (ka, kb) = (self.a * PI, self.b * PI);
        let (sx, cx) = (ka * x[0]).sin_cos();
        let (sy, cy) = (kb * x[1]).sin_cos();
        let v = self.amplitude * sx * sy;
        [-ka * ka * v, self.amplitude * ka * kb * cx * cy, -kb * kb * v]
    }
}

/// Smooth exact solution and the loads it induces through the strong form
/// `-div theta(u) + alpha grad p = fe`,
/// `div(kappa grad p) - (alpha^2 / iota) p - alpha div u = ff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub u: [SineProduct; 2],
    pub p: SineProduct,
    pub material: MaterialParams,
}

impl Manufactured {
    pub fn new(material: MaterialParams) -> Self {
        Self {
            u: [
                SineProduct { amplitude: 1.0, a: 1.0, b: 1.0 },
                SineProduct { amplitude: 0.5, a: 1.0, b: 2.0 },
            ],
            p: SineProduct { amplitude: 1.0, a: 2.0, b: 1.0 },
            material,
        }
    }

    pub fn displacement(&self, x: Point) -> [f64; 2] {
        [self.u[0].value(x), self.u[1].value(x)]
    }

    pub fn pressure(&self, x: Point) -> f64 {
        self.p.value(x)
    }

    pub fn fe(&self, x: Point) -> [f64; 2] {
        let MaterialParams { tau, iota, alpha, .. } = self.material;
        let h0 = self.u[0].hess(x);
        let h1 = self.u[1].hess(x);
        let ddiv = [h0[0] + h1[1], h0[1] + h1[2]];
        let gp = self.p.grad(x);
        [
            -(tau * (h0[0] + h0[2]) + (tau + iota) * ddiv[0]) + alpha * gp[0],
            -(tau * (h1[0] + h1[2]) + (tau + iota) * ddiv[1]) + alpha * gp[1],
        ]
    }

    pub fn ff(&self, x: Point) -> f64 {
        let MaterialParams { iota, alpha, kappa: k, .. } = self.material;
        let hp = self.p.hess(x);
        let div_u = self.u[0].grad(x)[0] + self.u[1].grad(x)[1];
        k[0][0] * hp[0] + (k[0][1] + k[1][0]) * hp[1] + k[1][1] * hp[2]
            - alpha * alpha / iota * self.p.value(x)
            - alpha * div_u
    }
}

/// Clamped displacement and prescribed pressure on the whole boundary.
pub fn clamped_tags(_mid: Point, _normal: Point) -> BoundaryTags {
    BoundaryTags::new(DisplacementTag::Dirichlet, PressureTag::Pressure)
}

/// Material, loads, obstacle and initial mesh of a built-in problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem {
    pub kind: ProblemKind,
    pub material: MaterialParams,
    manufactured: Manufactured,
}

impl Problem {
    pub fn new(kind: ProblemKind) -> Self {
        let material = MaterialParams::default();
        Self {
            kind,
            material,
            manufactured: Manufactured::new(material),
        }
    }

    pub fn mesh(&self, m: usize, degree: usize) -> Result<Mesh> {
        match self.kind {
            ProblemKind::ContactSquare => unit_square_mesh_tagged(m, degree, contact_square_tags),
            ProblemKind::Manufactured => unit_square_mesh_tagged(m, degree, clamped_tags),
        }
    }

    pub fn fe(&self, x: Point) -> [f64; 2] {
        match self.kind {
            ProblemKind::ContactSquare => [0.0, -1.0],
            ProblemKind::Manufactured => self.manufactured.fe(x),
        }
    }

    pub fn ff(&self, x: Point) -> f64 {
        match self.kind {
            ProblemKind::ContactSquare => -1.0,
            ProblemKind::Manufactured => self.manufactured.ff(x),
        }
    }

    /// Obstacle distance along the outward normal of the contact boundary.
    pub fn gap(&self, x: Point) -> f64 {
        match self.kind {
            ProblemKind::ContactSquare => obstacle_gap(x),
            ProblemKind::Manufactured => f64::INFINITY,
        }
    }

    pub fn exact(&self) -> Option<&Manufactured> {
        match self.kind {
            ProblemKind::Manufactured => Some(&self.manufactured),
            ProblemKind::ContactSquare => None,
        }
    }
}

/// `g(x) = 3 (1 - cos(x_1 - 1/2))`.
pub fn obstacle_gap(x: Point) -> f64 {
    3.0 * (1.0 - (x[0] - 0.5).cos())
}
