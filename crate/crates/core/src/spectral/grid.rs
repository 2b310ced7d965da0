use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub size: usize,
    /// Physical length of the periodic axis.
    pub extent: f64,
    pub kind: AxisKind,
}

impl Axis {
    pub fn spatial(name: &str, size: usize, extent: f64) -> Self {
        Axis {
            name: name.to_string(),
            size,
            extent,
            kind: AxisKind::Spatial,
        }
    }

    pub fn temporal(name: &str, size: usize, extent: f64) -> Self {
        Axis {
            name: name.to_string(),
            size,
            extent,
            kind: AxisKind::Temporal,
        }
    }
}

/// Periodic grid geometry. Axes are stored in declaration order, which is also the
/// row-major memory order of every field on the grid (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        for a in &axes {
            if a.size < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis `{}` has size {} (< 2)",
                    a.name, a.size
                )));
            }
            if !(a.extent > 0.0 && a.extent.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "axis `{}` has non-positive extent {}",
                    a.name, a.extent
                )));
            }
        }
        let temporal = axes.iter().filter(|a| a.kind == AxisKind::Temporal).count();
        if temporal > 1 {
            return Err(Error::InvalidGrid(format!(
                "{temporal} temporal axes declared, at most one allowed"
            )));
        }
        Ok(GridSpec { axes })
    }

    /// Spatial periodic grid with axes named x, y, z, w... in order.
    pub fn periodic(sizes: &[usize], extents: &[f64]) -> Result<Self> {
        if sizes.len() != extents.len() {
            return Err(Error::InvalidGrid("sizes and extents differ in length".into()));
        }
        const NAMES: [&str; 4] = ["x", "y", "z", "w"];
        let axes = sizes
            .iter()
            .zip(extents)
            .enumerate()
            .map(|(i, (&n, &l))| {
                let name = NAMES.get(i).map(|s| s.to_string()).unwrap_or(format!("x{i}"));
                Axis {
                    name,
                    size: n,
                    extent: l,
                    kind: AxisKind::Spatial,
                }
            })
            .collect();
        GridSpec::new(axes)
    }

    /// Unit square (or cube, or interval) with the given sizes.
    pub fn unit(sizes: &[usize]) -> Result<Self> {
        GridSpec::periodic(sizes, &vec![1.0; sizes.len()])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.size).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        a.extent / a.size as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    pub fn spatial_axes(&self) -> Vec<usize> {
        (0..self.ndim())
            .filter(|&i| self.axes[i].kind == AxisKind::Spatial)
            .collect()
    }

    pub fn temporal_axis(&self) -> Option<usize> {
        (0..self.ndim()).find(|&i| self.axes[i].kind == AxisKind::Temporal)
    }

    /// Row-major strides (in points, not bytes).
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape())
    }

    /// Same axes with one axis resized and its extent rescaled so the spacing is kept.
    pub fn resized(&self, axis: usize, size: usize) -> Result<Self> {
        let mut axes = self.axes.clone();
        let dx = self.spacing(axis);
        axes[axis].size = size;
        axes[axis].extent = dx * size as f64;
        GridSpec::new(axes)
    }

    pub fn drop_axis(&self, axis: usize) -> Result<Self> {
        let mut axes = self.axes.clone();
        axes.remove(axis);
        GridSpec::new(axes)
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Decompose a flat row-major index into a multi-index.
pub(crate) fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for j in (0..shape.len()).rev() {
        out[j] = flat % shape[j];
        flat /= shape[j];
    }
}

/// Multi-channel real field, channel-major, each channel row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    channels: usize,
    data: Vec<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("field needs at least one channel".into()));
        }
        let expect = channels * grid.len();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "data length {} != channels {} x points {}",
                data.len(),
                channels,
                grid.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at flat index {pos}")));
        }
        Ok(RealField {
            grid,
            channels,
            data,
        })
    }

    pub fn zeros(grid: &GridSpec, channels: usize) -> Self {
        RealField {
            grid: grid.clone(),
            channels,
            data: vec![0.0; channels * grid.len()],
        }
    }

    /// Evaluate `f(channel, coords)` at every point, coordinates in physical units.
    pub fn from_fn(grid: &GridSpec, channels: usize, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let shape = grid.shape();
        let n = grid.len();
        let mut idx = vec![0usize; shape.len()];
        let mut x = vec![0.0; shape.len()];
        let mut data = Vec::with_capacity(channels * n);
        for c in 0..channels {
            for p in 0..n {
                unravel(p, &shape, &mut idx);
                for j in 0..shape.len() {
                    x[j] = grid.coord(j, idx[j]);
                }
                data.push(f(c, &x));
            }
        }
        RealField {
            grid: grid.clone(),
            channels,
            data,
        }
    }

    pub(crate) fn from_parts(grid: GridSpec, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * grid.len());
        RealField {
            grid,
            channels,
            data,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn points(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.points();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.points();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Replace the grid metadata (sizes must agree).
    pub fn with_grid(self, grid: GridSpec) -> Result<Self> {
        if grid.shape() != self.grid.shape() {
            return Err(Error::Shape(format!(
                "cannot relabel grid {:?} as {:?}",
                self.grid.shape(),
                grid.shape()
            )));
        }
        Ok(RealField { grid, ..self })
    }

    pub fn same_shape(&self, other: &RealField) -> bool {
        self.channels == other.channels && self.grid.shape() == other.grid.shape()
    }

    pub fn check_same_shape(&self, other: &RealField, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{:?} vs {}x{:?}",
                self.channels,
                self.grid.shape(),
                other.channels,
                other.grid.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> RealField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &RealField, b: f64) -> Result<RealField> {
        self.check_same_shape(other, "lincomb")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(RealField::from_parts(self.grid.clone(), self.channels, data))
    }

    /// Channels `[start, start + count)` as a new field.
    pub fn select_channels(&self, start: usize, count: usize) -> Result<RealField> {
        if count == 0 || start + count > self.channels {
            return Err(Error::Shape(format!(
                "channel range {start}..{} outside 0..{}",
                start + count,
                self.channels
            )));
        }
        let n = self.points();
        Ok(RealField::from_parts(
            self.grid.clone(),
            count,
            self.data[start * n..(start + count) * n].to_vec(),
        ))
    }

    /// Concatenate fields along the channel axis.
    pub fn stack(fields: &[&RealField]) -> Result<RealField> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Shape("stack of zero fields".into()))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for f in fields {
            if f.grid.shape() != first.grid.shape() {
                return Err(Error::Shape("stacked fields live on different grids".into()));
            }
            channels += f.channels;
            data.extend_from_slice(&f.data);
        }
        Ok(RealField::from_parts(first.grid.clone(), channels, data))
    }

    /// Circular shift by whole cells: `out[i] = self[i - shift]` on every axis.
    pub fn roll(&self, shift: &[isize]) -> Result<RealField> {
        let shape = self.grid.shape();
        if shift.len() != shape.len() {
            return Err(Error::Shape("shift has wrong number of axes".into()));
        }
        let st = strides(&shape);
        let n = self.points();
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; shape.len()];
        for p in 0..n {
            unravel(p, &shape, &mut idx);
            let mut q = 0;
            for j in 0..shape.len() {
                let m = shape[j] as isize;
                q += ((idx[j] as isize + shift[j]).rem_euclid(m)) as usize * st[j];
            }
            for c in 0..self.channels {
                out[c * n + q] = self.data[c * n + p];
            }
        }
        Ok(RealField::from_parts(self.grid.clone(), self.channels, out))
    }

    /// Spatial mean of each channel.
    pub fn channel_means(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / self.points() as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::unit(&[1, 4]).is_err());
        assert!(GridSpec::periodic(&[4], &[0.0]).is_err());
        assert!(GridSpec::new(vec![
            Axis::temporal("t", 4, 1.0),
            Axis::temporal("s", 4, 1.0)
        ])
        .is_err());
        let g = GridSpec::new(vec![Axis::temporal("t", 5, 1.0), Axis::spatial("x", 8, 2.0)]).unwrap();
        assert_eq!(g.temporal_axis(), Some(0));
        assert_eq!(g.spatial_axes(), vec![1]);
        assert_eq!(g.strides(), vec![8, 1]);
    }

    #[test]
    fn field_rejects_bad_data() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        assert!(RealField::new(g.clone(), 1, vec![0.0; 15]).is_err());
        let mut d = vec![0.0; 16];
        d[3] = f64::NAN;
        assert!(matches!(RealField::new(g, 1, d), Err(Error::NonFinite(_))));
    }

    #[test]
    fn roll_moves_values_forward() {
        let g = GridSpec::unit(&[4]).unwrap();
        let f = RealField::new(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.roll(&[1]).unwrap().data(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.roll(&[-1]).unwrap().roll(&[1]).unwrap(), f);
    }
}
