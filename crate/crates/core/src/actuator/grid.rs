use serde::{Deserialize, Serialize};

use super::ActuatorError;

/// Side of the normal-indentation grid.
pub const NORMAL_GRID: usize = 9;
/// Side of the shear-indentation grid.
pub const SHEAR_GRID: usize = 3;
/// Number of contact-position classes (one per normal-grid point).
pub const POSITION_CLASSES: usize = NORMAL_GRID * NORMAL_GRID;

/// Which indentation grid a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Normal,
    Shear,
}

impl GridKind {
    pub fn side(self) -> usize {
        match self {
            GridKind::Normal => NORMAL_GRID,
            GridKind::Shear => SHEAR_GRID,
        }
    }
}

/// A point on one of the indentation grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub kind: GridKind,
    pub row: usize,
    pub col: usize,
}

impl GridPoint {
    pub fn normal(row: usize, col: usize) -> Result<Self, ActuatorError> {
        Self::new(GridKind::Normal, row, col)
    }

    pub fn shear(row: usize, col: usize) -> Result<Self, ActuatorError> {
        Self::new(GridKind::Shear, row, col)
    }

    pub fn new(kind: GridKind, row: usize, col: usize) -> Result<Self, ActuatorError> {
        let side = kind.side();
        if row >= side || col >= side {
            return Err(ActuatorError::OutOfGrid { row, col, side });
        }
        Ok(Self { kind, row, col })
    }

    /// Pad centre, which coincides with the sensor locus.
    pub fn center() -> Self {
        Self { kind: GridKind::Normal, row: NORMAL_GRID / 2, col: NORMAL_GRID / 2 }
    }

    /// The normal-grid point this point coincides with.
    pub fn as_normal(&self) -> GridPoint {
        match self.kind {
            GridKind::Normal => *self,
            // Shear positions sit on every second normal-grid point around the centre.
            GridKind::Shear => GridPoint { kind: GridKind::Normal, row: 2 + 2 * self.row, col: 2 + 2 * self.col },
        }
    }

    /// Position class in `0..POSITION_CLASSES`.
    pub fn class_index(&self) -> usize {
        let n = self.as_normal();
        n.row * NORMAL_GRID + n.col
    }

    pub fn from_class_index(class: usize) -> Result<Self, ActuatorError> {
        Self::normal(class / NORMAL_GRID, class % NORMAL_GRID)
    }

    /// Lateral coordinates in mm, origin at the pad centre.
    pub fn position_mm(&self, spacing_mm: f64) -> [f64; 2] {
        let n = self.as_normal();
        let half = (NORMAL_GRID / 2) as f64;
        [(n.col as f64 - half) * spacing_mm, (n.row as f64 - half) * spacing_mm]
    }

    /// Point reflected through the pad centre.
    pub fn mirrored(&self) -> GridPoint {
        let side = self.kind.side();
        GridPoint { kind: self.kind, row: side - 1 - self.row, col: side - 1 - self.col }
    }

    /// Every point of a grid in row-major order.
    pub fn all(kind: GridKind) -> Vec<GridPoint> {
        let side = kind.side();
        (0..side * side).map(|i| GridPoint { kind, row: i / side, col: i % side }).collect()
    }

    /// Nearest valid point of the grid, clamping coordinates at the border.
    pub fn clamped(kind: GridKind, row: i64, col: i64) -> GridPoint {
        let max = kind.side() as i64 - 1;
        GridPoint { kind, row: row.clamp(0, max) as usize, col: col.clamp(0, max) as usize }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_classes() {
        assert!(GridPoint::normal(9, 0).is_err());
        assert!(GridPoint::shear(0, 3).is_err());
        let c = GridPoint::center();
        assert_eq!(c.class_index(), 40);
        assert_eq!(c.position_mm(2.0), [0.0, 0.0]);
        assert_eq!(GridPoint::shear(1, 1).unwrap().class_index(), 40);
        assert_eq!(GridPoint::shear(0, 0).unwrap().position_mm(2.0), [-4.0, -4.0]);
        assert_eq!(GridPoint::normal(0, 8).unwrap().position_mm(2.0), [8.0, -8.0]);
        assert_eq!(GridPoint::from_class_index(17).unwrap(), GridPoint::normal(1, 8).unwrap());
        assert_eq!(GridPoint::all(GridKind::Normal).len(), 81);
        assert_eq!(GridPoint::clamped(GridKind::Normal, -3, 12), GridPoint::normal(0, 8).unwrap());
        assert_eq!(GridPoint::normal(1, 2).unwrap().mirrored(), GridPoint::normal(7, 6).unwrap());
    }
}
