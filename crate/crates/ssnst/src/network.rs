//! Stream network topology and the geometric quantities derived from it.
//!
//! A network is a rooted tree of segments (parent = downstream neighbour,
//! root = outlet). Sites sit on segments at a stated `updist`, the network
//! distance from the outlet measured along the flow path. From the tree we
//! derive hydrologic distances, flow connectivity, junction distances for
//! flow-unconnected pairs, additive function values (AFV) and the tail-up
//! spatial weight matrix W.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stream segment. `parent_id` is the downstream neighbour; the single
/// outlet segment has none. Lengths are meters, areas km².
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub id: i64,
    pub parent_id: Option<i64>,
    pub length: f64,
    pub seg_contrib_area: f64,
    pub watershed_area: f64,
}

/// A monitoring (or prediction) location on a segment.
///
/// `updist` is measured from the outlet along the flow path and must lie
/// within the host segment's extent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Site {
    pub site_id: i64,
    pub segment_id: i64,
    pub updist: f64,
    pub x: f64,
    pub y: f64,
}

/// How confluence weights are shared among sibling segments.
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    /// Watershed area as a surrogate for water volume.
    WatershedArea,
    /// Every sibling gets the same share.
    Equal,
    /// Caller-supplied additive variable, aligned with the segment order.
    Custom(Vec<f64>),
}

/// Proportional influences and additive function values per segment,
/// aligned with `StreamNetwork::segments`.
#[derive(Debug, Clone)]
pub struct AfvTable {
    pub pi: Vec<f64>,
    pub afv: Vec<f64>,
}

/// Validated rooted-tree network with sites attached.
#[derive(Debug, Clone)]
pub struct StreamNetwork {
    segments: Vec<Segment>,
    sites: Vec<Site>,
    seg_index: HashMap<i64, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    /// updist of each segment's downstream end (sum of lengths downstream of it).
    down_updist: Vec<f64>,
    /// Hops to the root, 0 for the outlet.
    depth: Vec<usize>,
    site_segment: Vec<usize>,
    afv: Option<Vec<f64>>,
}

/// Pairwise network geometry for one site set.
///
/// For flow-unconnected pairs `h = a + b` where (a, b) are the distances from
/// each site to their common confluence, stored with `a <= b`. For
/// flow-connected pairs `a` and `b` are unused and stored as 0.
#[derive(Debug, Clone)]
pub struct HydroDistances {
    pub h: DMatrix<f64>,
    pub flow_conn: DMatrix<bool>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Everything the covariance kernels need about one site set.
#[derive(Debug, Clone)]
pub struct DistanceBundle {
    pub h: DMatrix<f64>,
    pub flow_conn: DMatrix<bool>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub site_ids: Vec<i64>,
    /// False when built from bare coordinates; stream kernels then error out.
    pub has_network: bool,
}

impl StreamNetwork {
    /// Validate topology and site placement. AFV is left unset; call
    /// [`StreamNetwork::compute_afv`] before asking for spatial weights.
    pub fn build(segments: Vec<Segment>, sites: Vec<Site>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::ConfigInvalid("empty segment list".into()));
        }
        let mut seg_index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if seg_index.insert(s.id, i).is_some() {
                return Err(Error::ConfigInvalid(format!("duplicate segment id {}", s.id)));
            }
        }

        let mut parent = vec![None; segments.len()];
        let mut root: Option<usize> = None;
        for (i, s) in segments.iter().enumerate() {
            match s.parent_id {
                None => {
                    if let Some(r) = root {
                        return Err(Error::MultipleOutlets(segments[r].id, s.id));
                    }
                    root = Some(i);
                }
                Some(pid) => {
                    let pi = *seg_index.get(&pid).ok_or(Error::DanglingReference {
                        kind: "segment",
                        id: s.id,
                        target: pid,
                    })?;
                    parent[i] = Some(pi);
                }
            }
        }

        // Walking parent links from any segment must reach the outlet within
        // |segments| steps; otherwise there is a cycle.
        let (root, depth) = match root {
            Some(r) => {
                let mut depth = vec![usize::MAX; segments.len()];
                depth[r] = 0;
                for start in 0..segments.len() {
                    let mut trail = Vec::new();
                    let mut cur = start;
                    while depth[cur] == usize::MAX {
                        trail.push(cur);
                        match parent[cur] {
                            Some(p) => cur = p,
                            None => break,
                        }
                        if trail.len() > segments.len() {
                            return Err(Error::CycleDetected(segments[start].id));
                        }
                    }
                    if depth[cur] == usize::MAX {
                        return Err(Error::CycleDetected(segments[start].id));
                    }
                    let mut d = depth[cur];
                    for &t in trail.iter().rev() {
                        d += 1;
                        depth[t] = d;
                    }
                }
                (r, depth)
            }
            // Every segment has a parent, so some parent chain must loop.
            None => return Err(Error::CycleDetected(segments[0].id)),
        };

        let mut children = vec![Vec::new(); segments.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }

        // Downstream-end updist: total length strictly downstream of a segment.
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.sort_by_key(|&i| depth[i]);
        let mut down_updist = vec![0.0; segments.len()];
        for &i in &order {
            if let Some(p) = parent[i] {
                down_updist[i] = down_updist[p] + segments[p].length;
            }
        }

        for (i, s) in segments.iter().enumerate() {
            let child_sum: f64 = children[i].iter().map(|&c| segments[c].watershed_area).sum();
            if s.watershed_area < child_sum - 1e-9 {
                return Err(Error::WatershedNotMonotone(s.id, s.watershed_area, child_sum));
            }
        }

        let mut site_segment = Vec::with_capacity(sites.len());
        for site in &sites {
            let si = *seg_index
                .get(&site.segment_id)
                .ok_or(Error::DanglingReference {
                    kind: "site",
                    id: site.site_id,
                    target: site.segment_id,
                })?;
            let lo = down_updist[si];
            let hi = lo + segments[si].length;
            if site.updist < lo - 1e-6 || site.updist > hi + 1e-6 {
                return Err(Error::UpdistOutOfRange {
                    site_id: site.site_id,
                    segment_id: site.segment_id,
                    updist: site.updist,
                    lo,
                    hi,
                });
            }
            site_segment.push(si);
        }

        Ok(StreamNetwork {
            segments,
            sites,
            seg_index,
            parent,
            children,
            root,
            down_updist,
            depth,
            site_segment,
            afv: None,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn root_segment(&self) -> &Segment {
        &self.segments[self.root]
    }

    pub fn afv(&self) -> Option<&[f64]> {
        self.afv.as_deref()
    }

    pub fn segment_position(&self, id: i64) -> Option<usize> {
        self.seg_index.get(&id).copied()
    }

    /// Proportional influence of each segment at its confluence and the
    /// additive function value (product of PI down the path to the outlet).
    /// Also stores the AFV on the network for later weight computation.
    pub fn compute_afv(&mut self, weighting: &Weighting) -> Result<AfvTable> {
        let n = self.segments.len();
        let weights: Vec<f64> = match weighting {
            Weighting::WatershedArea => {
                self.segments.iter().map(|s| s.watershed_area).collect()
            }
            Weighting::Equal => vec![1.0; n],
            Weighting::Custom(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "custom weights: {} values for {} segments",
                        w.len(),
                        n
                    )));
                }
                w.clone()
            }
        };
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) {
                return Err(Error::NonPositiveWeight(self.segments[i].id, w));
            }
        }

        let mut pi = vec![1.0; n];
        for i in 0..n {
            if let Some(p) = self.parent[i] {
                let sib_sum: f64 = self.children[p].iter().map(|&c| weights[c]).sum();
                pi[i] = weights[i] / sib_sum;
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.depth[i]);
        let mut afv = vec![1.0; n];
        for &i in &order {
            if let Some(p) = self.parent[i] {
                afv[i] = afv[p] * pi[i];
            }
        }

        self.afv = Some(afv.clone());
        Ok(AfvTable { pi, afv })
    }

    /// True iff segment `anc` is an ancestor of `desc` or the same segment.
    fn is_ancestor_or_self(&self, anc: usize, desc: usize) -> bool {
        let mut cur = desc;
        loop {
            if cur == anc {
                return true;
            }
            match self.parent[cur] {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Deepest common ancestor segment of two segments.
    fn common_ancestor(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("depth > 0 implies parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("depth > 0 implies parent");
        }
        while a != b {
            a = self.parent[a].expect("tree has a single root");
            b = self.parent[b].expect("tree has a single root");
        }
        a
    }

    /// Total hydrologic distance, flow connectivity, and junction distances.
    ///
    /// Two sites are flow-connected iff one site's segment is an
    /// ancestor-or-self of the other's. For flow-unconnected pairs the
    /// junction is the upstream node of their deepest common ancestor
    /// segment.
    pub fn hydrologic_distances(&self) -> HydroDistances {
        let s = self.sites.len();
        let mut h = DMatrix::zeros(s, s);
        let mut flow_conn = DMatrix::from_element(s, s, false);
        let mut a = DMatrix::zeros(s, s);
        let mut b = DMatrix::zeros(s, s);

        for i in 0..s {
            flow_conn[(i, i)] = true;
            for j in (i + 1)..s {
                let (si, sj) = (self.site_segment[i], self.site_segment[j]);
                let (ui, uj) = (self.sites[i].updist, self.sites[j].updist);
                let connected =
                    self.is_ancestor_or_self(si, sj) || self.is_ancestor_or_self(sj, si);
                if connected {
                    let dist = (ui - uj).abs();
                    h[(i, j)] = dist;
                    h[(j, i)] = dist;
                    flow_conn[(i, j)] = true;
                    flow_conn[(j, i)] = true;
                } else {
                    let dca = self.common_ancestor(si, sj);
                    let junction = self.down_updist[dca] + self.segments[dca].length;
                    let di = ui - junction;
                    let dj = uj - junction;
                    let (lo, hi) = if di <= dj { (di, dj) } else { (dj, di) };
                    a[(i, j)] = lo;
                    a[(j, i)] = lo;
                    b[(i, j)] = hi;
                    b[(j, i)] = hi;
                    h[(i, j)] = lo + hi;
                    h[(j, i)] = lo + hi;
                }
            }
        }
        HydroDistances { h, flow_conn, a, b }
    }

    /// Tail-up spatial weights: sqrt(AFV_upstream / AFV_downstream) for
    /// flow-connected pairs, 0 otherwise, 1 on the diagonal.
    pub fn spatial_weights(&self, flow_conn: &DMatrix<bool>) -> Result<DMatrix<f64>> {
        let afv = self.afv.as_ref().ok_or(Error::AfvMissing)?;
        let s = self.sites.len();
        if flow_conn.nrows() != s {
            return Err(Error::DimensionMismatch(format!(
                "flow_conn is {}x{} for {} sites",
                flow_conn.nrows(),
                flow_conn.ncols(),
                s
            )));
        }
        let mut w = DMatrix::zeros(s, s);
        for i in 0..s {
            w[(i, i)] = 1.0;
            for j in (i + 1)..s {
                if !flow_conn[(i, j)] {
                    continue;
                }
                let (si, sj) = (self.site_segment[i], self.site_segment[j]);
                // The deeper segment hosts the upstream site; same segment
                // gives ratio 1 since AFV is per-segment.
                let (up, down) = if self.is_ancestor_or_self(sj, si) {
                    (si, sj)
                } else {
                    (sj, si)
                };
                let wij = (afv[up] / afv[down]).sqrt();
                w[(i, j)] = wij;
                w[(j, i)] = wij;
            }
        }
        Ok(w)
    }

    /// Full distance bundle (hydrologic + Euclidean + weights) for the
    /// network's own site list.
    pub fn distance_bundle(&self) -> Result<DistanceBundle> {
        let hd = self.hydrologic_distances();
        let w = self.spatial_weights(&hd.flow_conn)?;
        let d = euclidean_distances(&self.sites);
        Ok(DistanceBundle {
            h: hd.h,
            flow_conn: hd.flow_conn,
            a: hd.a,
            b: hd.b,
            d,
            w,
            site_ids: self.sites.iter().map(|s| s.site_id).collect(),
            has_network: true,
        })
    }

    /// Same network carrying a different site list (prediction grids);
    /// the computed AFV is preserved. Sites must reference existing segments.
    pub fn with_sites(&self, sites: Vec<Site>) -> Result<StreamNetwork> {
        let tmp = StreamNetwork::build(self.segments.clone(), sites)?;
        Ok(StreamNetwork { afv: self.afv.clone(), ..tmp })
    }

    /// Bundle for an arbitrary site list placed on this network.
    pub fn bundle_for_sites(&self, sites: &[Site]) -> Result<DistanceBundle> {
        self.with_sites(sites.to_vec())?.distance_bundle()
    }

    /// Cross geometry between this network's sites (rows) and another site
    /// list (columns): hydrologic distance, connectivity, junction distances
    /// and weights. Used to build observation-by-prediction covariances.
    pub fn cross_bundle(&self, other: &[Site]) -> Result<CrossBundle> {
        let afv = self.afv.as_ref().ok_or(Error::AfvMissing)?;
        let mut other_seg = Vec::with_capacity(other.len());
        for site in other {
            let si = *self
                .seg_index
                .get(&site.segment_id)
                .ok_or(Error::DanglingReference {
                    kind: "site",
                    id: site.site_id,
                    target: site.segment_id,
                })?;
            other_seg.push(si);
        }
        let (n, m) = (self.sites.len(), other.len());
        let mut h = DMatrix::zeros(n, m);
        let mut flow_conn = DMatrix::from_element(n, m, false);
        let mut a = DMatrix::zeros(n, m);
        let mut b = DMatrix::zeros(n, m);
        let mut w = DMatrix::zeros(n, m);
        let mut d = DMatrix::zeros(n, m);
        let mut coincident = DMatrix::from_element(n, m, false);
        for i in 0..n {
            for j in 0..m {
                let (si, sj) = (self.site_segment[i], other_seg[j]);
                let (ui, uj) = (self.sites[i].updist, other[j].updist);
                let dx = self.sites[i].x - other[j].x;
                let dy = self.sites[i].y - other[j].y;
                d[(i, j)] = (dx * dx + dy * dy).sqrt();
                let i_down = self.is_ancestor_or_self(si, sj);
                let j_down = self.is_ancestor_or_self(sj, si);
                if i_down || j_down {
                    flow_conn[(i, j)] = true;
                    h[(i, j)] = (ui - uj).abs();
                    let (up, down) = if j_down { (si, sj) } else { (sj, si) };
                    w[(i, j)] = (afv[up] / afv[down]).sqrt();
                    coincident[(i, j)] = si == sj
                        && (ui - uj).abs() == 0.0
                        && d[(i, j)] == 0.0
                        && self.sites[i].site_id == other[j].site_id;
                } else {
                    let dca = self.common_ancestor(si, sj);
                    let junction = self.down_updist[dca] + self.segments[dca].length;
                    let di = ui - junction;
                    let dj = uj - junction;
                    let (lo, hi) = if di <= dj { (di, dj) } else { (dj, di) };
                    a[(i, j)] = lo;
                    b[(i, j)] = hi;
                    h[(i, j)] = lo + hi;
                }
            }
        }
        Ok(CrossBundle {
            h,
            flow_conn,
            a,
            b,
            d,
            w,
            coincident,
        })
    }
}

/// Rectangular observation-by-prediction geometry.
#[derive(Debug, Clone)]
pub struct CrossBundle {
    pub h: DMatrix<f64>,
    pub flow_conn: DMatrix<bool>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// True where the pair is the same physical location and site id;
    /// only there does the nugget enter a cross covariance.
    pub coincident: DMatrix<bool>,
}

/// Pairwise Euclidean distances from projected coordinates.
pub fn euclidean_distances(sites: &[Site]) -> DMatrix<f64> {
    let s = sites.len();
    let mut d = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let dx = sites[i].x - sites[j].x;
            let dy = sites[i].y - sites[j].y;
            let dist = (dx * dx + dy * dy).sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

impl DistanceBundle {
    /// Euclidean-only bundle for sites that do not live on a stream network.
    /// Stream kernels reject such bundles.
    pub fn from_coordinates(sites: &[Site]) -> Self {
        let s = sites.len();
        let mut flow_conn = DMatrix::from_element(s, s, false);
        let mut w = DMatrix::zeros(s, s);
        for i in 0..s {
            flow_conn[(i, i)] = true;
            w[(i, i)] = 1.0;
        }
        DistanceBundle {
            h: DMatrix::zeros(s, s),
            flow_conn,
            a: DMatrix::zeros(s, s),
            b: DMatrix::zeros(s, s),
            d: euclidean_distances(sites),
            w,
            site_ids: sites.iter().map(|s| s.site_id).collect(),
            has_network: false,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    /// Square sub-bundle over sites `lo..hi` (same site order).
    pub fn slice(&self, lo: usize, hi: usize) -> DistanceBundle {
        let n = hi - lo;
        let block = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(lo + i, lo + j)]);
        DistanceBundle {
            h: block(&self.h),
            flow_conn: DMatrix::from_fn(n, n, |i, j| self.flow_conn[(lo + i, lo + j)]),
            a: block(&self.a),
            b: block(&self.b),
            d: block(&self.d),
            w: block(&self.w),
            site_ids: self.site_ids[lo..hi].to_vec(),
            has_network: self.has_network,
        }
    }
}

impl CrossBundle {
    /// Column block `lo..hi` (prediction-site range).
    pub fn columns(&self, lo: usize, hi: usize) -> CrossBundle {
        let n = self.h.nrows();
        let m = hi - lo;
        let block = |mat: &DMatrix<f64>| DMatrix::from_fn(n, m, |i, j| mat[(i, lo + j)]);
        CrossBundle {
            h: block(&self.h),
            flow_conn: DMatrix::from_fn(n, m, |i, j| self.flow_conn[(i, lo + j)]),
            a: block(&self.a),
            b: block(&self.b),
            d: block(&self.d),
            w: block(&self.w),
            coincident: DMatrix::from_fn(n, m, |i, j| self.coincident[(i, lo + j)]),
        }
    }
}

/// Test fixture shared across the crate: the worked five-segment network
/// (r5 outlet, r3/r4 children of r5, r1/r2 children of r3) with the
/// published watershed areas, and a site geometry consistent with it.
#[cfg(test)]
pub(crate) mod fixtures {
    use super::{Segment, Site};

    pub(crate) fn fig1_segments() -> Vec<Segment> {
        vec![
            Segment { id: 1, parent_id: Some(3), length: 2000.0, seg_contrib_area: 17.5, watershed_area: 17.5 },
            Segment { id: 2, parent_id: Some(3), length: 2200.0, seg_contrib_area: 8.5, watershed_area: 8.5 },
            Segment { id: 3, parent_id: Some(5), length: 3000.0, seg_contrib_area: 8.0, watershed_area: 34.0 },
            Segment { id: 4, parent_id: Some(5), length: 2500.0, seg_contrib_area: 5.5, watershed_area: 5.5 },
            Segment { id: 5, parent_id: None, length: 4000.0, seg_contrib_area: 9.0, watershed_area: 48.5 },
        ]
    }

    pub(crate) fn fig1_sites() -> Vec<Site> {
        vec![
            Site { site_id: 1, segment_id: 1, updist: 7400.0, x: 4000.0, y: 8200.0 },
            Site { site_id: 2, segment_id: 2, updist: 7300.0, x: 6000.0, y: 8100.0 },
            Site { site_id: 3, segment_id: 3, updist: 6800.0, x: 5000.0, y: 6800.0 },
            Site { site_id: 4, segment_id: 5, updist: 500.0, x: 5200.0, y: 500.0 },
        ]
    }
}
