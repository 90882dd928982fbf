//! Single-qubit Pauli operators and their group products.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn index(self) -> usize {
        match self {
            PauliAxis::X => 0,
            PauliAxis::Y => 1,
            PauliAxis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> PauliAxis {
        Self::ALL[i % 3]
    }

    pub fn label(self) -> char {
        match self {
            PauliAxis::X => 'x',
            PauliAxis::Y => 'y',
            PauliAxis::Z => 'z',
        }
    }

    pub fn matrix(self) -> Matrix2<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            PauliAxis::X => Matrix2::new(o, l, l, o),
            PauliAxis::Y => Matrix2::new(o, -i, i, o),
            PauliAxis::Z => Matrix2::new(l, o, o, -l),
        }
    }

    /// Unit vector of the axis on the Bloch sphere.
    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for PauliAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(PauliAxis::X),
            "y" | "Y" => Ok(PauliAxis::Y),
            "z" | "Z" => Ok(PauliAxis::Z),
            other => Err(Error::InvalidArgument(format!("unknown Pauli axis `{other}`"))),
        }
    }
}

/// Parses a compact axis word such as `"zzx"`.
pub fn parse_axes(word: &str) -> Result<Vec<PauliAxis>> {
    word.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| c.to_string().parse())
        .collect()
}

/// Element of the Pauli group: `i^phase` times the identity or an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliProduct {
    pub axis: Option<PauliAxis>,
    /// Power of i, in 0..4.
    pub phase: u8,
}

impl PauliProduct {
    pub const IDENTITY: PauliProduct = PauliProduct { axis: None, phase: 0 };

    pub fn of(axis: PauliAxis) -> Self {
        PauliProduct { axis: Some(axis), phase: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.axis.is_none()
    }

    pub fn mul(self, rhs: PauliProduct) -> PauliProduct {
        let mut phase = (self.phase + rhs.phase) % 4;
        let axis = match (self.axis, rhs.axis) {
            (None, b) => b,
            (a, None) => a,
            (Some(a), Some(b)) if a == b => None,
            (Some(a), Some(b)) => {
                let (ia, ib) = (a.index(), b.index());
                let c = 3 - ia - ib;
                // σ_a σ_b = i ε_abc σ_c
                if (ib + 3 - ia) % 3 == 1 {
                    phase = (phase + 1) % 4;
                } else {
                    phase = (phase + 3) % 4;
                }
                Some(PauliAxis::from_index(c))
            }
        };
        PauliProduct { axis, phase }
    }

    pub fn product(axes: &[PauliAxis]) -> PauliProduct {
        axes.iter().fold(PauliProduct::IDENTITY, |acc, &a| acc.mul(PauliProduct::of(a)))
    }

    pub fn phase_factor(&self) -> Complex64 {
        match self.phase {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    pub fn matrix(&self) -> Matrix2<Complex64> {
        let m = match self.axis {
            None => Matrix2::identity(),
            Some(a) => a.matrix(),
        };
        m * self.phase_factor()
    }
}
