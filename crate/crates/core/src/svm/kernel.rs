use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
    Sigmoid,
    Polynomial,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Linear,
        KernelKind::Rbf,
        KernelKind::Sigmoid,
        KernelKind::Polynomial,
    ];

    pub fn uses_gamma(self) -> bool {
        self != KernelKind::Linear
    }

    pub fn uses_coef0(self) -> bool {
        matches!(self, KernelKind::Sigmoid | KernelKind::Polynomial)
    }

    pub fn uses_degree(self) -> bool {
        self == KernelKind::Polynomial
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Sigmoid => "sigmoid",
            KernelKind::Polynomial => "polynomial",
        }
    }
}

/// A kernel with every parameter resolved to a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Kernel {
    pub fn linear() -> Self {
        Kernel {
            kind: KernelKind::Linear,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
        }
    }

    /// `K(a, b)`:
    /// linear `a.b`, rbf `exp(-g |a-b|^2)`, sigmoid `tanh(g a.b + r)`,
    /// polynomial `(g a.b + r)^d`.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot(a, b) + self.coef0).tanh(),
            KernelKind::Polynomial => (self.gamma * dot(a, b) + self.coef0).powi(self.degree as i32),
        }
    }
}
