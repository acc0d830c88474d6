use crate::discretization::Interval;
use crate::real::Real;

/// Closed-form families for the auxiliary function σ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaFamily {
    /// σ(x) = a·x(1−x)
    Parabola,
    /// σ(x) = a·sin(πx)
    Sine,
}

/// σ together with the open set ω̃ outside of which σₓ may not vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSpec<T> {
    pub family: SigmaFamily,
    pub scale: T,
    pub omega_tilde: Interval<T>,
}

impl<T: Real> Default for SigmaSpec<T> {
    fn default() -> Self {
        Self {
            family: SigmaFamily::Parabola,
            scale: T::one(),
            omega_tilde: Interval::new(T::lit(0.45), T::lit(0.55)),
        }
    }
}

impl<T: Real> SigmaSpec<T> {
    pub fn value(&self, x: T) -> T {
        match self.family {
            SigmaFamily::Parabola => self.scale * x * (T::one() - x),
            SigmaFamily::Sine => self.scale * (T::PI() * x).sin(),
        }
    }

    pub fn derivative(&self, x: T) -> T {
        match self.family {
            SigmaFamily::Parabola => self.scale * (T::one() - T::lit(2.0) * x),
            SigmaFamily::Sine => self.scale * T::PI() * (T::PI() * x).cos(),
        }
    }

    /// ‖σ‖∞ on [0, 1].
    pub fn sup_norm(&self) -> T {
        match self.family {
            SigmaFamily::Parabola => self.scale.abs() / T::lit(4.0),
            SigmaFamily::Sine => self.scale.abs(),
        }
    }

    /// Location of the maximum (and only critical point) of σ.
    pub fn argmax(&self) -> T {
        T::lit(0.5)
    }
}
