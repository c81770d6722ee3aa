//! The three-channel annotation raster: attack, living and background
//! planes in `[0, 1]`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::RegionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Attack,
    Living,
    Background,
}

/// `H x W x 3` annotation or prediction raster.
///
/// The attack and living planes carry depth (or binary) values inside their
/// regions; the background plane is binary and is the inversion of the union
/// of the two region supports. Region membership, not the raster value,
/// defines channel support: a depth-valued plane can legitimately hold 0.0
/// inside its region, so validity checks take the region masks as input.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeChannelMap {
    pub attack: Array2<f32>,
    pub living: Array2<f32>,
    pub background: Array2<f32>,
}

impl ThreeChannelMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        ThreeChannelMap {
            attack: Array2::zeros((height, width)),
            living: Array2::zeros((height, width)),
            background: Array2::zeros((height, width)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.attack.dim()
    }

    pub fn plane(&self, c: Channel) -> &Array2<f32> {
        match c {
            Channel::Attack => &self.attack,
            Channel::Living => &self.living,
            Channel::Background => &self.background,
        }
    }

    pub fn plane_mut(&mut self, c: Channel) -> &mut Array2<f32> {
        match c {
            Channel::Attack => &mut self.attack,
            Channel::Living => &mut self.living,
            Channel::Background => &mut self.background,
        }
    }

    /// Plane-level consistency: all values in range, background binary, and
    /// no pixel positive in both the attack and living planes.
    pub fn check_planes(&self) -> Result<()> {
        if self.living.dim() != self.attack.dim() || self.background.dim() != self.attack.dim() {
            return Err(Error::integrity("three-channel planes differ in size"));
        }
        for ((&a, &l), &b) in self
            .attack
            .iter()
            .zip(self.living.iter())
            .zip(self.background.iter())
        {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&b) {
                return Err(Error::integrity("plane value outside [0, 1]"));
            }
            if b != 0.0 && b != 1.0 {
                return Err(Error::integrity("background plane is not binary"));
            }
            if a > 0.0 && l > 0.0 {
                return Err(Error::integrity("attack and living planes overlap"));
            }
            if b == 1.0 && (a > 0.0 || l > 0.0) {
                return Err(Error::integrity("background overlaps a foreground plane"));
            }
        }
        Ok(())
    }

    /// Full partition check against the region masks the map was built from:
    /// supports disjoint, plane values confined to their regions, and
    /// background exactly the inversion of the union of the two regions.
    pub fn check_partition(&self, attack_region: &RegionMask, living_region: &RegionMask) -> Result<()> {
        let dims = self.dims();
        if attack_region.dims() != dims || living_region.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: attack_region.dims(),
            });
        }
        self.check_planes()?;
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                let am = attack_region.bitmap[[i, j]];
                let lm = living_region.bitmap[[i, j]];
                if am == 1 && lm == 1 {
                    return Err(Error::integrity("attack and living regions overlap"));
                }
                let bg = self.background[[i, j]];
                let expect_bg = if am == 1 || lm == 1 { 0.0 } else { 1.0 };
                if bg != expect_bg {
                    return Err(Error::integrity(format!(
                        "background at ({j}, {i}) is {bg}, expected {expect_bg}"
                    )));
                }
                if self.attack[[i, j]] > 0.0 && am == 0 {
                    return Err(Error::integrity("attack value outside attack region"));
                }
                if self.living[[i, j]] > 0.0 && lm == 0 {
                    return Err(Error::integrity("living value outside living region"));
                }
            }
        }
        Ok(())
    }
}
