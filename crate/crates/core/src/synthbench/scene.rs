use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{Landmark, LandmarkId, Pose, Trajectory};
use crate::{MarkingClass, Point2, Se3, SegmentChain, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Square grid of streets spanning `extent × extent`.
    Grid,
    /// One street of length `extent` along the x axis.
    Straight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleRule {
    Uniform,
    /// Within 25 m of street ends.
    NearIntersections,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub layout: Layout,
    pub extent: f64,
    /// Street length between grid intersections.
    pub block_length: f64,
    pub lane_width: f64,
    pub sessions: usize,
    /// Driven length per session.
    pub route_length: f64,
    pub pose_spacing: f64,
    pub speed: f64,
    /// Landmarks per kilometer of street.
    pub densities: BTreeMap<MarkingClass, f64>,
    pub pole_rule: PoleRule,
    /// Positional noise of the mapped landmarks.
    pub landmark_sigma: f64,
    pub seed: u64,
}

/// Landmark densities per kilometer of street, proportioned like the class
/// inventory of a typical inner-city survey.
pub fn default_densities() -> BTreeMap<MarkingClass, f64> {
    use MarkingClass::*;
    [
        (CurbLine, 120.0),
        (DashedLine12cm, 40.0),
        (Pole, 20.0),
        (DashedLine25cm, 7.0),
        (Line12cm, 3.0),
        (ArrowLine, 2.0),
        (Line25cm, 1.5),
        (StopLine, 1.2),
        (PedestrianRoadLine, 1.0),
        (ZebraLine, 1.0),
        (BicycleRoadLine, 0.5),
    ]
    .into_iter()
    .collect()
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            layout: Layout::Grid,
            extent: 450.0,
            block_length: 150.0,
            lane_width: 3.5,
            sessions: 1,
            route_length: 2000.0,
            pose_spacing: 1.0,
            speed: 10.0,
            densities: default_densities(),
            pole_rule: PoleRule::Uniform,
            landmark_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.extent > 0.0) {
            return Err("extent must be positive".into());
        }
        if self.layout == Layout::Grid && !(self.block_length > 0.0 && self.block_length <= self.extent) {
            return Err("block_length must lie in (0, extent]".into());
        }
        if !(self.lane_width > 0.0) || !(self.pose_spacing > 0.0) || !(self.speed > 0.0) {
            return Err("lane_width, pose_spacing and speed must be positive".into());
        }
        if self.densities.values().any(|&d| !(d >= 0.0)) {
            return Err("densities must be non-negative".into());
        }
        if !(self.landmark_sigma >= 0.0) {
            return Err("landmark_sigma must be non-negative".into());
        }
        if !(self.route_length > 0.0) {
            return Err("route_length must be positive".into());
        }
        Ok(())
    }

    /// Center of the scene, used as default pivot for rigid drift.
    pub fn center(&self) -> Point2 {
        match self.layout {
            Layout::Grid => Point2::new(self.extent / 2.0, self.extent / 2.0),
            Layout::Straight => Point2::new(self.extent / 2.0, 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    pub nodes: Vec<Point2>,
    pub edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
}

impl RoadNetwork {
    pub fn build(spec: &SceneSpec) -> Self {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        match spec.layout {
            Layout::Straight => {
                nodes.push(Point2::new(0.0, 0.0));
                nodes.push(Point2::new(spec.extent, 0.0));
                edges.push((0, 1));
            }
            Layout::Grid => {
                let n = (spec.extent / spec.block_length).floor() as usize + 1;
                for r in 0..n {
                    for c in 0..n {
                        let p = Point2::new(c as f64 * spec.block_length, r as f64 * spec.block_length);
                        nodes.push(p);
                    }
                }
                for r in 0..n {
                    for c in 0..n {
                        let k = r * n + c;
                        if c + 1 < n {
                            edges.push((k, k + 1));
                        }
                        if r + 1 < n {
                            edges.push((k, k + n));
                        }
                    }
                }
            }
        }
        let mut neighbours = vec![Vec::new(); nodes.len()];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        Self {
            nodes,
            edges,
            neighbours,
        }
    }

    pub fn length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b)| self.nodes[a].distance(self.nodes[b]))
            .sum()
    }
}

/// Landmarks plus the ground-truth trajectories that observe them.
#[derive(Clone, Debug)]
pub struct Scene {
    pub network: RoadNetwork,
    pub landmarks: Vec<Landmark>,
    pub ground_truth: Vec<Trajectory>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates landmarks along the streets and one route per session.
pub fn generate_scene(spec: &SceneSpec) -> Scene {
    let network = RoadNetwork::build(spec);
    let landmarks = place_landmarks(&network, spec, &mut stream(spec.seed, 0));
    let ground_truth = (0..spec.sessions)
        .map(|s| {
            let mut rng = stream(spec.seed, 1 + s as u64);
            route(&network, spec, &format!("s{s}"), &mut rng)
        })
        .collect();
    Scene {
        network,
        landmarks,
        ground_truth,
    }
}

fn route(net: &RoadNetwork, spec: &SceneSpec, session: &str, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut path = vec![rng.random_range(0..net.nodes.len())];
    let mut length = 0.0;
    while length < spec.route_length {
        let cur = *path.last().expect("non-empty path");
        let back = path.len().checked_sub(2).map(|k| path[k]);
        let options: Vec<usize> = net.neighbours[cur]
            .iter()
            .copied()
            .filter(|&n| Some(n) != back)
            .collect();
        let next = if options.is_empty() {
            back.expect("connected network")
        } else {
            options[rng.random_range(0..options.len())]
        };
        length += net.nodes[cur].distance(net.nodes[next]);
        path.push(next);
        if spec.layout == Layout::Straight {
            break;
        }
    }
    let lane = offset_polyline(
        &path.iter().map(|&k| net.nodes[k]).collect::<Vec<_>>(),
        -spec.lane_width / 2.0,
    );
    resample(&lane, spec, session)
}

/// Offsets a polyline sideways (positive to the left) with mitered corners.
fn offset_polyline(points: &[Point2], offset: f64) -> Vec<Point2> {
    let dir = |a: Point2, b: Point2| {
        let d = b - a;
        d * (1.0 / d.norm())
    };
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let normal = if k == 0 {
            dir(points[0], points[1]).perp()
        } else if k == n - 1 {
            dir(points[n - 2], points[n - 1]).perp()
        } else {
            let n1 = dir(points[k - 1], points[k]).perp();
            let n2 = dir(points[k], points[k + 1]).perp();
            let denom = 1.0 + n1.dot(n2);
            if denom < 1e-6 {
                n1
            } else {
                (n1 + n2) * (1.0 / denom)
            }
        };
        out.push(points[k] + normal * offset);
    }
    out
}

fn resample(line: &[Point2], spec: &SceneSpec, session: &str) -> Trajectory {
    let mut arcs = vec![0.0];
    for w in line.windows(2) {
        arcs.push(arcs.last().expect("arc") + w[0].distance(w[1]));
    }
    let total = *arcs.last().expect("arc");
    let n = (total / spec.pose_spacing).floor() as usize;
    let mut poses = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for i in 0..=n {
        let s = i as f64 * spec.pose_spacing;
        while seg + 2 < arcs.len() && s > arcs[seg + 1] {
            seg += 1;
        }
        let (a, b) = (line[seg], line[seg + 1]);
        let u = ((s - arcs[seg]) / (arcs[seg + 1] - arcs[seg])).clamp(0.0, 1.0);
        let p = a + (b - a) * u;
        let yaw = (b.y - a.y).atan2(b.x - a.x);
        poses.push(Pose {
            session_id: session.to_owned(),
            index: i as u64,
            timestamp: s / spec.speed,
            transform: Se3::from_planar(p.x, p.y, yaw),
        });
    }
    Trajectory::new(session, poses).expect("generated trajectory is valid")
}

#[derive(Clone, Copy)]
enum Region {
    Anywhere,
    /// Distance band `[lo, hi]` from either street end.
    NearEnds(f64, f64),
}

#[derive(Clone, Copy)]
enum Form {
    Point,
    /// Along the street with length range and lateral offsets.
    Along(f64, f64),
    Arrow,
    /// Across the street from lateral `a` to `b`.
    Across(f64, f64),
}

struct Recipe {
    form: Form,
    laterals: Vec<f64>,
    region: Region,
    gap: f64,
}

fn recipe(class: MarkingClass, h: f64, pole_rule: PoleRule) -> Recipe {
    use MarkingClass::*;
    let both = |o: f64| vec![-o, o];
    let (form, laterals, region, gap) = match class {
        Pole => (
            Form::Point,
            both(h + 1.5),
            match pole_rule {
                PoleRule::Uniform => Region::Anywhere,
                PoleRule::NearIntersections => Region::NearEnds(h + 1.0, 25.0),
            },
            3.0,
        ),
        CurbLine => (Form::Along(6.0, 10.0), both(h + 0.3), Region::Anywhere, 0.5),
        DashedLine12cm => (Form::Along(3.0, 3.0), vec![0.0], Region::Anywhere, 3.0),
        DashedLine25cm => (Form::Along(2.0, 2.0), both(h - 0.9), Region::Anywhere, 2.0),
        Line12cm => (Form::Along(15.0, 30.0), both(h - 0.2), Region::Anywhere, 1.0),
        Line25cm => (Form::Along(10.0, 20.0), both(h - 0.6), Region::Anywhere, 1.0),
        BicycleRoadLine => (Form::Along(10.0, 20.0), both(h - 1.5), Region::Anywhere, 1.0),
        ArrowLine => (Form::Arrow, both(h / 2.0), Region::NearEnds(h + 4.0, 35.0), 2.0),
        StopLine => (Form::Across(0.0, h), vec![0.0], Region::NearEnds(h + 1.0, h + 3.0), 1.0),
        PedestrianRoadLine => (Form::Across(-h, h), vec![0.0], Region::NearEnds(h + 3.0, h + 12.0), 1.0),
        ZebraLine => (
            Form::Along(3.0, 3.0),
            (-3..=3).map(|k| k as f64 * h / 3.5).collect(),
            Region::NearEnds(h + 4.0, h + 14.0),
            0.5,
        ),
    };
    Recipe {
        form,
        laterals,
        region,
        gap,
    }
}

fn place_landmarks(net: &RoadNetwork, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Landmark> {
    let km = net.length() / 1000.0;
    let h = spec.lane_width;
    let lengths: Vec<f64> = net
        .edges
        .iter()
        .map(|&(a, b)| net.nodes[a].distance(net.nodes[b]))
        .collect();
    let total: f64 = lengths.iter().sum();
    let noise = Normal::new(0.0, spec.landmark_sigma.max(0.0)).expect("valid sigma");
    // occupied intervals along each street, per class and lateral slot
    let mut used: HashMap<(usize, MarkingClass, i64), Vec<(f64, f64)>> = HashMap::new();
    let mut out = Vec::new();
    for class in MarkingClass::ALL {
        let density = spec.densities.get(&class).copied().unwrap_or(0.0);
        let count = (density * km).round() as usize;
        let r = recipe(class, h, spec.pole_rule);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < count && attempts < 200 * count {
            attempts += 1;
            let mut pick = rng.random_range(0.0..total);
            let mut e = 0;
            while e + 1 < lengths.len() && pick >= lengths[e] {
                pick -= lengths[e];
                e += 1;
            }
            let len = lengths[e];
            let lateral = r.laterals[rng.random_range(0..r.laterals.len())];
            let extent = match r.form {
                Form::Point | Form::Across(..) => 0.0,
                Form::Along(lo, hi) => {
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                }
                Form::Arrow => 5.0,
            };
            let clearance = if spec.layout == Layout::Grid { h + 1.0 } else { 0.0 };
            let s0 = match r.region {
                Region::Anywhere => {
                    if len - 2.0 * clearance <= extent {
                        continue;
                    }
                    rng.random_range(clearance..len - clearance - extent)
                }
                Region::NearEnds(lo, hi) => {
                    let d = rng.random_range(lo..hi);
                    if d + extent > len / 2.0 {
                        continue;
                    }
                    if rng.random_bool(0.5) {
                        d
                    } else {
                        len - d - extent
                    }
                }
            };
            let key = (e, class, (lateral * 100.0).round() as i64);
            let interval = (s0 - r.gap, s0 + extent + r.gap);
            let slot = used.entry(key).or_default();
            if slot.iter().any(|&(a, b)| interval.0 < b && a < interval.1) {
                continue;
            }
            slot.push((s0, s0 + extent));
            let (a, b) = net.edges[e];
            let d = (net.nodes[b] - net.nodes[a]) * (1.0 / len);
            let nrm = d.perp();
            let at = |s: f64, o: f64| net.nodes[a] + d * s + nrm * o;
            let mut jitter = |p: Point2| {
                if spec.landmark_sigma > 0.0 {
                    p + Point2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    p
                }
            };
            let shape = match r.form {
                Form::Point => Shape::Pole(jitter(at(s0, lateral))),
                Form::Along(..) => chain(vec![jitter(at(s0, lateral)), jitter(at(s0 + extent, lateral))], class),
                Form::Arrow => {
                    // shaft plus one barb, pointing along the street direction
                    let (tail, tip) = (at(s0, lateral), at(s0 + extent, lateral));
                    let barb = at(s0 + extent - 1.2, lateral + 0.6);
                    chain(vec![jitter(tail), jitter(tip), jitter(barb)], class)
                }
                Form::Across(o0, o1) => {
                    let side = if s0 < len / 2.0 { 1.0 } else { -1.0 };
                    chain(vec![jitter(at(s0, side * o0)), jitter(at(s0, side * o1))], class)
                }
            };
            out.push(Landmark {
                id: LandmarkId(out.len() as u64),
                shape,
            });
            placed += 1;
        }
        if placed < count {
            log::warn!("placed {placed} of {count} {class} landmarks");
        }
    }
    out
}

fn chain(vertices: Vec<Point2>, class: MarkingClass) -> Shape {
    Shape::Segment(SegmentChain::new(vertices, class).expect("generated chain is valid"))
}
