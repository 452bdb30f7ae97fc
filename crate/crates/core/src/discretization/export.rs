//! Trajectory files.
//!
//! Binary layout, little-endian: `u64` dimension count, one `u64` node count
//! per axis, `u64 Nt`, `f64 T`, then `Nt + 1` row-major slices of `f64`.

use std::io::{Read, Write};

use crate::discretization::coefficients::{FieldRole, SpaceTimeField};
use crate::discretization::grid::{SpatialGrid, TimeGrid};
use crate::error::{Error, Result};

pub fn write_trajectory<W: Write>(
    mut out: W,
    field: &SpaceTimeField,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<()> {
    out.write_all(&(grid.dims() as u64).to_le_bytes())?;
    for n in grid.shape() {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    out.write_all(&(time.steps() as u64).to_le_bytes())?;
    out.write_all(&time.horizon().to_le_bytes())?;
    for slice in &field.slices {
        for v in slice {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Header and slices of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub shape: Vec<usize>,
    pub steps: usize,
    pub horizon: f64,
    pub slices: Vec<Vec<f64>>,
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_trajectory<R: Read>(mut input: R) -> Result<TrajectoryFile> {
    let dims = read_u64(&mut input)? as usize;
    if dims == 0 || dims > 2 {
        return Err(Error::InvalidParameter(format!(
            "trajectory file declares {dims} dimensions"
        )));
    }
    let shape = (0..dims)
        .map(|_| read_u64(&mut input).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let steps = read_u64(&mut input)? as usize;
    let horizon = f64::from_bits(read_u64(&mut input)?);
    let len: usize = shape.iter().product();
    let mut slices = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let slice = (0..len)
            .map(|_| read_u64(&mut input).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        slices.push(slice);
    }
    Ok(TrajectoryFile {
        shape,
        steps,
        horizon,
        slices,
    })
}

impl TrajectoryFile {
    pub fn into_field(self, role: FieldRole) -> SpaceTimeField {
        SpaceTimeField {
            role,
            slices: self.slices,
        }
    }
}

/// `t,x,value` rows for a one-dimensional trajectory, boundary nodes included.
pub fn trajectory_csv(
    field: &SpaceTimeField,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<String> {
    if grid.dims() != 1 {
        return Err(Error::InvalidParameter(
            "CSV trajectory export is one-dimensional".into(),
        ));
    }
    let mut out = String::from("t,x,value\n");
    for (n, slice) in field.slices.iter().enumerate() {
        let t = time.node(n);
        let closed = grid.to_closed(slice);
        for (j, v) in closed.iter().enumerate() {
            out.push_str(&format!("{t},{},{v:e}\n", grid.closed_node(j)[0]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let grid = SpatialGrid::new(&[1.0, 2.0], &[3, 4]).unwrap();
        let time = TimeGrid::new(0.5, 2).unwrap();
        let field = SpaceTimeField {
            role: FieldRole::State,
            slices: (0..3)
                .map(|n| (0..12).map(|i| (n * 12 + i) as f64 * 0.25).collect())
                .collect(),
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &field, &grid, &time).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 + 1 + 1 + 36));
        let back = read_trajectory(&buf[..]).unwrap();
        assert_eq!(back.shape, vec![3, 4]);
        assert_eq!(back.steps, 2);
        assert_eq!(back.horizon, 0.5);
        assert_eq!(back.into_field(FieldRole::State), field);
    }

    #[test]
    fn csv_has_boundary_zeros() {
        let grid = SpatialGrid::new(&[1.0], &[3]).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let field = SpaceTimeField::zeros(FieldRole::State, 3, 2);
        let csv = trajectory_csv(&field, &grid, &time).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 * 5);
        assert_eq!(csv.lines().nth(1).unwrap(), "0,0,0e0");
    }
}
