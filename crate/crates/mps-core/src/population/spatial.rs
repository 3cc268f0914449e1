//! Uniform-grid nearest-neighbor index over facility locations.

use super::{distance2, Facility, FacilityId};

/// Grid index for one facility type. Queries are read-only and thread-safe.
pub struct SpatialIndex {
    cell_km: f64,
    cells_per_side: usize,
    /// Facility ids bucketed by cell, ordered by id within a cell.
    buckets: Vec<Vec<(FacilityId, (f64, f64))>>,
    len: usize,
}

impl SpatialIndex {
    pub fn build(extent_km: f64, facilities: impl Iterator<Item = (FacilityId, (f64, f64))>) -> Self {
        let items: Vec<_> = facilities.collect();
        // Aim for a handful of entries per cell; clamp the grid to a sane range.
        let target_cells = (items.len() as f64 / 4.0).sqrt().ceil() as usize;
        let cells_per_side = target_cells.clamp(1, 512);
        let cell_km = extent_km / cells_per_side as f64;
        let mut buckets = vec![Vec::new(); cells_per_side * cells_per_side];
        let len = items.len();
        for (id, loc) in items {
            let (cx, cy) = Self::cell_of(loc, cell_km, cells_per_side);
            buckets[cy * cells_per_side + cx].push((id, loc));
        }
        for b in &mut buckets {
            b.sort_by_key(|entry| entry.0);
        }
        SpatialIndex { cell_km, cells_per_side, buckets, len }
    }

    fn cell_of(loc: (f64, f64), cell_km: f64, side: usize) -> (usize, usize) {
        let cx = ((loc.0 / cell_km) as isize).clamp(0, side as isize - 1) as usize;
        let cy = ((loc.1 / cell_km) as isize).clamp(0, side as isize - 1) as usize;
        (cx, cy)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nearest facility to `from` within `radius_km` (ties broken by lower
    /// id). `None` when no facility qualifies.
    pub fn nearest_within(&self, from: (f64, f64), radius_km: f64) -> Option<FacilityId> {
        if self.len == 0 {
            return None;
        }
        let side = self.cells_per_side;
        let (cx, cy) = Self::cell_of(from, self.cell_km, side);
        let max_r2 = if radius_km.is_finite() { radius_km * radius_km } else { f64::INFINITY };
        let mut best: Option<(f64, FacilityId)> = None;

        let max_ring = side; // scanning every cell at worst
        for ring in 0..=max_ring {
            // Any candidate in this ring is at least (ring-1) cells away.
            if ring > 0 {
                let ring_min = (ring as f64 - 1.0).max(0.0) * self.cell_km;
                let bound = ring_min * ring_min;
                if let Some((bd, _)) = best {
                    if bound > bd {
                        break;
                    }
                }
                if bound > max_r2 {
                    break;
                }
            }
            let mut visited_any = false;
            let lo_x = cx as isize - ring as isize;
            let hi_x = cx as isize + ring as isize;
            let lo_y = cy as isize - ring as isize;
            let hi_y = cy as isize + ring as isize;
            for y in lo_y..=hi_y {
                if y < 0 || y >= side as isize {
                    continue;
                }
                for x in lo_x..=hi_x {
                    if x < 0 || x >= side as isize {
                        continue;
                    }
                    let on_ring = ring == 0
                        || x == lo_x
                        || x == hi_x
                        || y == lo_y
                        || y == hi_y;
                    if !on_ring {
                        continue;
                    }
                    visited_any = true;
                    for &(id, loc) in &self.buckets[y as usize * side + x as usize] {
                        let d2 = distance2(from, loc);
                        if d2 > max_r2 {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bd, bid)) => d2 < bd || (d2 == bd && id < bid),
                        };
                        if better {
                            best = Some((d2, id));
                        }
                    }
                }
            }
            if !visited_any && ring > 0 {
                // Ring is fully outside the grid; nothing further out either.
                let off_grid = lo_x < 0 && hi_x >= side as isize && lo_y < 0 && hi_y >= side as isize;
                if off_grid {
                    break;
                }
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn from_facilities<'a>(
        extent_km: f64,
        facilities: impl Iterator<Item = &'a Facility>,
    ) -> Self {
        Self::build(extent_km, facilities.map(|f| (f.id, f.location)))
    }
}
