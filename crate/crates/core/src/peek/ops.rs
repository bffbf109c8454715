use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::PeekScalar;

macro_rules! impl_binop {
    ($Trait:ident, $method:ident, $AssignTrait:ident, $assign:ident, $op:tt) => {
        impl $Trait<PeekScalar> for PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: PeekScalar) -> PeekScalar {
                PeekScalar::combine(self, rhs, |a, b| a $op b)
            }
        }

        impl<'a> $Trait<&'a PeekScalar> for PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: &'a PeekScalar) -> PeekScalar {
                if rhs.deps.is_empty() {
                    let b = rhs.primal;
                    self.map(|a| a $op b)
                } else {
                    PeekScalar::combine(self, rhs.clone(), |a, b| a $op b)
                }
            }
        }

        impl<'a> $Trait<PeekScalar> for &'a PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: PeekScalar) -> PeekScalar {
                PeekScalar::combine(self.clone(), rhs, |a, b| a $op b)
            }
        }

        impl<'a, 'b> $Trait<&'b PeekScalar> for &'a PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: &'b PeekScalar) -> PeekScalar {
                PeekScalar::combine_ref(self, rhs, |a, b| a $op b)
            }
        }

        impl $Trait<f64> for PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: f64) -> PeekScalar {
                self.map(|a| a $op rhs)
            }
        }

        impl<'a> $Trait<f64> for &'a PeekScalar {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: f64) -> PeekScalar {
                self.clone().map(|a| a $op rhs)
            }
        }

        impl $Trait<PeekScalar> for f64 {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: PeekScalar) -> PeekScalar {
                rhs.map(|b| self $op b)
            }
        }

        impl<'a> $Trait<&'a PeekScalar> for f64 {
            type Output = PeekScalar;
            #[inline]
            fn $method(self, rhs: &'a PeekScalar) -> PeekScalar {
                rhs.clone().map(|b| self $op b)
            }
        }

        impl $AssignTrait<PeekScalar> for PeekScalar {
            #[inline]
            fn $assign(&mut self, rhs: PeekScalar) {
                let lhs = std::mem::take(self);
                *self = PeekScalar::combine(lhs, rhs, |a, b| a $op b);
            }
        }

        impl<'a> $AssignTrait<&'a PeekScalar> for PeekScalar {
            #[inline]
            fn $assign(&mut self, rhs: &'a PeekScalar) {
                let lhs = std::mem::take(self);
                *self = lhs $op rhs;
            }
        }

        impl $AssignTrait<f64> for PeekScalar {
            #[inline]
            fn $assign(&mut self, rhs: f64) {
                self.primal = self.primal $op rhs;
                for dep in self.deps.iter_mut() {
                    for v in dep.row.iter_mut() {
                        *v = *v $op rhs;
                    }
                }
            }
        }
    };
}

impl_binop!(Add, add, AddAssign, add_assign, +);
impl_binop!(Sub, sub, SubAssign, sub_assign, -);
impl_binop!(Mul, mul, MulAssign, mul_assign, *);
impl_binop!(Div, div, DivAssign, div_assign, /);

impl Neg for PeekScalar {
    type Output = PeekScalar;
    fn neg(self) -> PeekScalar {
        self.map(|a| -a)
    }
}

impl<'a> Neg for &'a PeekScalar {
    type Output = PeekScalar;
    fn neg(self) -> PeekScalar {
        self.clone().map(|a| -a)
    }
}
