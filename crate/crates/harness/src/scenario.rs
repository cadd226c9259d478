//! Concrete experiment setup: mesh, time grid, inclusion, data and fluxes.

use log::warn;
use subdiff_core::levelset::Shape;
use subdiff_core::meshfem::{ElementField, Mesh};
use subdiff_core::spectral::{EdgeProfiles, ModalExcitation, Profile1D, SeparableField};
use subdiff_core::timefrac::{Excitation, TimeGrid, TimeProfile};

use crate::config::{Case, Config, ExcitationKind, ShapeSpec};
use crate::error::{HarnessError, Result};

impl ShapeSpec {
    pub fn to_shape(&self) -> Shape {
        match self {
            ShapeSpec::Disc { center, radius } => Shape::Disc {
                center: *center,
                radius: *radius,
            },
            ShapeSpec::Square { center, side } => Shape::Square {
                center: *center,
                side: *side,
            },
            ShapeSpec::Polygon { vertices } => Shape::Polygon(vertices.clone()),
            ShapeSpec::Union { parts } => Shape::Union(parts.iter().map(|p| p.to_shape()).collect()),
        }
    }
}

/// Concave pentagon used for case (iii).
pub const CONCAVE_POLYGON: [[f64; 2]; 5] = [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.5, 0.5], [0.25, 0.75]];

pub fn inclusion(case: Case) -> Option<Shape> {
    match case {
        Case::I => Some(Shape::Disc {
            center: [0.5, 0.5],
            radius: 1.0 / 3.0,
        }),
        Case::Ii => Some(Shape::Square {
            center: [0.5, 0.5],
            side: 0.5,
        }),
        Case::Iii => Some(Shape::Polygon(CONCAVE_POLYGON.to_vec())),
        Case::Iv => Some(Shape::Union(vec![
            Shape::Disc {
                center: [0.25, 0.5],
                radius: 0.2,
            },
            Shape::Disc {
                center: [0.75, 0.5],
                radius: 0.2,
            },
        ])),
        Case::Custom => None,
    }
}

/// Default initial guess: a small circle inside the inclusion, or two small
/// discs near the boundary for case (iv).
pub fn initial_guess(case: Case) -> Shape {
    let disc = |c: [f64; 2], r: f64| Shape::Disc { center: c, radius: r };
    match case {
        Case::I | Case::Ii | Case::Custom => disc([0.5, 0.5], 0.1),
        Case::Iii => disc([0.5, 0.4], 0.1),
        Case::Iv => Shape::Union(vec![disc([0.12, 0.5], 0.08), disc([0.88, 0.5], 0.08)]),
    }
}

/// `x^2 (1 - x)^2 y^2 (1 - y)^2`.
pub fn initial_value() -> SeparableField {
    let q = Profile1D::Poly(vec![0.0, 0.0, 1.0, -2.0, 1.0]);
    SeparableField::term(1.0, q.clone(), q)
}

/// `1 + x + y`.
pub fn source() -> SeparableField {
    let one = || Profile1D::Poly(vec![1.0]);
    let lin = || Profile1D::Poly(vec![0.0, 1.0]);
    SeparableField::term(1.0, one(), one())
        .plus(SeparableField::term(1.0, lin(), one()))
        .plus(SeparableField::term(1.0, one(), lin()))
}

/// Flux terms as (edge profile, switch-on time).
pub fn flux_terms(kind: ExcitationKind, t_split: f64) -> Vec<ModalExcitation> {
    let cos = |n: usize, t_on: f64| ModalExcitation {
        eta: EdgeProfiles::uniform(Profile1D::Cos(2 * n)),
        profile: TimeProfile::Step { t_on },
    };
    match kind {
        ExcitationKind::G1 => vec![cos(1, t_split)],
        ExcitationKind::G2 => (1..=3).map(|n| cos(n, 0.25 * n as f64)).collect(),
        ExcitationKind::G3 => (1..=5).map(|n| cos(n, n as f64 / 6.0)).collect(),
        ExcitationKind::Constant => vec![ModalExcitation {
            eta: EdgeProfiles::uniform(Profile1D::constant(1.0)),
            profile: TimeProfile::Step { t_on: t_split },
        }],
    }
}

pub fn nodal_excitations(mesh: &Mesh, terms: &[ModalExcitation]) -> Vec<Excitation> {
    terms
        .iter()
        .map(|t| Excitation {
            eta: mesh.interpolate_boundary(|x, y| t.eta.eval(x, y)),
            profile: t.profile.clone(),
        })
        .collect()
}

/// Piecewise-constant coefficient, classified at element centroids.
pub fn sharp_coefficient(mesh: &Mesh, shape: &Shape, inside: f64, outside: f64) -> Result<ElementField> {
    Ok(ElementField::from_fn(mesh, |x, y| if shape.contains([x, y]) { inside } else { outside })?)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Config,
    pub mesh: Mesh,
    pub grid: TimeGrid,
    pub inclusion: Shape,
    pub initial: Shape,
    pub flux: Vec<ModalExcitation>,
    pub excitations: Vec<Excitation>,
    pub truth: ElementField,
    pub u0: Vec<f64>,
    pub f: Vec<f64>,
    /// Per boundary node: whether it is measured.
    pub observed: Vec<bool>,
}

impl Scenario {
    pub fn build(config: &Config) -> Result<Self> {
        config.validate()?;
        let mesh = Mesh::unit_square(config.mesh_n())?;
        let grid = TimeGrid::new(config.t_final, config.steps())?;
        let inclusion = match (&config.inclusion, inclusion(config.case)) {
            (Some(spec), _) => spec.to_shape(),
            (None, Some(s)) => s,
            (None, None) => {
                return Err(HarnessError::Config {
                    path: "inclusion".into(),
                    message: "required for case = \"custom\"".into(),
                })
            }
        };
        inclusion.validate()?;
        let initial = config
            .recovery
            .initial
            .as_ref()
            .map(|s| s.to_shape())
            .unwrap_or_else(|| initial_guess(config.case));
        initial.validate()?;
        let kind = config.excitation();
        if kind == ExcitationKind::Constant {
            warn!("eta = 1 has non-zero mean: the zero-mean compatibility condition of the theory is violated");
        }
        let flux = flux_terms(kind, config.t_split);
        let excitations = nodal_excitations(&mesh, &flux);
        let truth = sharp_coefficient(&mesh, &inclusion, config.a1, config.a2)?;
        let u0f = initial_value();
        let ff = source();
        let u0 = mesh.interpolate(|x, y| u0f.eval(x, y));
        let f = mesh.interpolate(|x, y| ff.eval(x, y));
        let nb = mesh.boundary_nodes().len();
        let observed = match &config.observed {
            None => vec![true; nb],
            Some(idx) => {
                let mut m = vec![false; nb];
                for &i in idx {
                    if i >= nb {
                        return Err(HarnessError::Config {
                            path: "observed".into(),
                            message: format!("boundary node {i} out of range (mesh has {nb})"),
                        });
                    }
                    m[i] = true;
                }
                m
            }
        };
        Ok(Scenario {
            config: config.clone(),
            mesh,
            grid,
            inclusion,
            initial,
            flux,
            excitations,
            truth,
            u0,
            f,
            observed,
        })
    }

    /// Earliest time at which the flux is non-zero.
    pub fn flux_onset(&self) -> f64 {
        self.flux
            .iter()
            .map(|e| e.profile.onset())
            .fold(f64::INFINITY, f64::min)
    }
}
