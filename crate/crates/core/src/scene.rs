//! Synthetic articulated figures moving in a top-down room plane.
//!
//! Coordinates are metres with `x` lateral and `y` depth away from the radar,
//! which sits at the origin looking along +y. A joint at `(x, y)` is seen at
//! range `hypot(x, y)` and azimuth `atan2(x, y)`.
//!
//! Labels are the joint positions normalised by the room bounds, so
//! `metres_per_unit` is the room extent along each axis.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{CLIP_FRAMES, JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};
use crate::radar::{synthesize_frame, IqCube, RadarConfig, Scatterer};
use crate::seed;

pub const JOINT_NAMES: [&str; JOINTS] = [
    "nose", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip",
    "l_knee", "r_knee", "l_ankle", "r_ankle",
];

const NOSE: usize = 0;
const L_SHO: usize = 1;
const R_SHO: usize = 2;
const L_ELB: usize = 3;
const R_ELB: usize = 4;
const L_WRI: usize = 5;
const R_WRI: usize = 6;
const L_HIP: usize = 7;
const R_HIP: usize = 8;
const L_KNE: usize = 9;
const R_KNE: usize = 10;
const L_ANK: usize = 11;
const R_ANK: usize = 12;

const TORSO: [usize; 4] = [L_SHO, R_SHO, L_HIP, R_HIP];

/// Skeleton tree used by the graph head. The hip–hip link is left out so the
/// 13 joints form a tree (12 edges); the hips stay connected through the
/// shoulders and nose.
pub const SKELETON_EDGES: [(usize, usize); 12] = [
    (NOSE, L_SHO),
    (NOSE, R_SHO),
    (L_SHO, L_ELB),
    (L_ELB, L_WRI),
    (R_SHO, R_ELB),
    (R_ELB, R_WRI),
    (L_SHO, L_HIP),
    (R_SHO, R_HIP),
    (L_HIP, L_KNE),
    (L_KNE, L_ANK),
    (R_HIP, R_KNE),
    (R_KNE, R_ANK),
];

/// Neutral standing pose, body-centred, facing the radar.
const REST: [[f64; 2]; JOINTS] = [
    [0.0, -0.08],
    [-0.19, 0.0],
    [0.19, 0.0],
    [-0.24, 0.02],
    [0.24, 0.02],
    [-0.27, 0.0],
    [0.27, 0.0],
    [-0.11, 0.02],
    [0.11, 0.02],
    [-0.12, -0.04],
    [0.12, -0.04],
    [-0.12, 0.03],
    [0.12, 0.03],
];

pub const BYSTANDER_SCATTERERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    ArmRaise,
    Stepping,
    TorsoTwist,
    WalkTowardAway,
    SideStep,
    Wave,
    Squat,
    Punch,
    Bow,
    JumpingJacks,
}

impl Motion {
    pub const ALL: [Motion; 10] = [
        Motion::ArmRaise,
        Motion::Stepping,
        Motion::TorsoTwist,
        Motion::WalkTowardAway,
        Motion::SideStep,
        Motion::Wave,
        Motion::Squat,
        Motion::Punch,
        Motion::Bow,
        Motion::JumpingJacks,
    ];

    /// Nominal repetition rate in Hz.
    fn rate(self) -> f64 {
        match self {
            Motion::ArmRaise => 0.5,
            Motion::Stepping => 0.8,
            Motion::TorsoTwist => 0.5,
            Motion::WalkTowardAway => 0.25,
            Motion::SideStep => 0.3,
            Motion::Wave => 1.0,
            Motion::Squat => 0.4,
            Motion::Punch => 0.5,
            Motion::Bow => 0.4,
            Motion::JumpingJacks => 0.6,
        }
    }

    /// Body-frame pose at phase `phi` with amplitude multiplier `amp`, plus
    /// the displacement of the body centre.
    fn pose(self, phi: f64, amp: f64) -> ([[f64; 2]; JOINTS], [f64; 2]) {
        let mut p = REST;
        let mut shift = [0.0, 0.0];
        // 0 → 1 → 0 over one cycle
        let rise = (1.0 - phi.cos()) / 2.0;
        let s = phi.sin();
        match self {
            Motion::ArmRaise => {
                for (elb, wri) in [(L_ELB, L_WRI), (R_ELB, R_WRI)] {
                    p[elb][1] -= 0.3 * amp * rise;
                    p[wri][1] -= 0.6 * amp * rise;
                }
            }
            Motion::Stepping => march(&mut p, s, amp),
            Motion::TorsoTwist => {
                let a = 0.5 * amp * s;
                for j in [NOSE, L_SHO, R_SHO, L_ELB, R_ELB, L_WRI, R_WRI] {
                    p[j] = rotate(p[j], a);
                }
            }
            Motion::WalkTowardAway => {
                shift[1] = 0.35 * amp * s;
                march(&mut p, (4.0 * phi).sin(), 0.6 * amp);
            }
            Motion::SideStep => {
                shift[0] = 0.3 * amp * s;
                let spread = 0.08 * amp * (2.0 * phi).sin().abs();
                p[L_ANK][0] -= spread;
                p[R_ANK][0] += spread;
            }
            Motion::Wave => {
                p[R_ELB][0] += 0.1 * amp;
                p[R_ELB][1] -= 0.1 * amp;
                p[R_WRI][0] += 0.08 * amp + 0.15 * amp * s;
                p[R_WRI][1] -= 0.2 * amp;
            }
            Motion::Squat => {
                p[L_HIP][1] += 0.2 * amp * rise;
                p[R_HIP][1] += 0.2 * amp * rise;
                p[L_KNE][1] -= 0.2 * amp * rise;
                p[R_KNE][1] -= 0.2 * amp * rise;
                p[L_WRI][1] -= 0.3 * amp * rise;
                p[R_WRI][1] -= 0.3 * amp * rise;
            }
            Motion::Punch => {
                p[L_ELB][1] -= 0.25 * amp * s.max(0.0);
                p[L_WRI][1] -= 0.55 * amp * s.max(0.0);
                p[R_ELB][1] -= 0.25 * amp * (-s).max(0.0);
                p[R_WRI][1] -= 0.55 * amp * (-s).max(0.0);
            }
            Motion::Bow => {
                p[NOSE][1] -= 0.35 * amp * rise;
                for j in [L_SHO, R_SHO, L_ELB, R_ELB, L_WRI, R_WRI] {
                    p[j][1] -= 0.25 * amp * rise;
                }
            }
            Motion::JumpingJacks => {
                let out = 0.4 * amp * rise;
                p[L_ELB][0] -= 0.5 * out;
                p[R_ELB][0] += 0.5 * out;
                p[L_WRI][0] -= out;
                p[R_WRI][0] += out;
                p[L_ANK][0] -= 0.15 * amp * rise;
                p[R_ANK][0] += 0.15 * amp * rise;
            }
        }
        (p, shift)
    }
}

fn march(p: &mut [[f64; 2]; JOINTS], s: f64, amp: f64) {
    p[L_KNE][1] -= 0.25 * amp * s.max(0.0);
    p[L_ANK][1] -= 0.1 * amp * s.max(0.0);
    p[R_KNE][1] -= 0.25 * amp * (-s).max(0.0);
    p[R_ANK][1] -= 0.1 * amp * (-s).max(0.0);
}

fn rotate(v: [f64; 2], a: f64) -> [f64; 2] {
    let (sa, ca) = a.sin_cos();
    [v[0] * ca - v[1] * sa, v[0] * sa + v[1] * ca]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Lateral room bounds, metres.
    pub room_x: [f64; 2],
    /// Depth room bounds, metres.
    pub room_y: [f64; 2],
    pub limb_reflectivity: f64,
    /// Shoulders and hips reflect this many times more than limb joints.
    pub torso_factor: f64,
    pub bystander_amplitude: f64,
    /// Depth band the bystander wanders in (between subject and radar).
    pub bystander_y: [f64; 2],
    /// Per-frame random-walk step, metres (std, clipped at 2 std).
    pub bystander_step: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_x: [-0.8, 0.8],
            room_y: [1.0, 2.6],
            limb_reflectivity: 1.0,
            torso_factor: 3.0,
            bystander_amplitude: 2.0,
            bystander_y: [1.1, 1.5],
            bystander_step: 0.06,
        }
    }
}

impl SceneConfig {
    pub fn metres_per_unit(&self) -> [f64; 2] {
        [self.room_x[1] - self.room_x[0], self.room_y[1] - self.room_y[0]]
    }

    pub fn validate(&self, radar: &RadarConfig) -> Result<()> {
        let [sx, sy] = self.metres_per_unit();
        if !(sx > 0.0 && sy > 0.0) {
            return Err(Error::Config("scene room bounds must be increasing".into()));
        }
        if self.room_y[0] <= 0.0 {
            return Err(Error::Config("scene.room_y must lie in front of the radar".into()));
        }
        let far = self.room_x[0].abs().max(self.room_x[1].abs()).hypot(self.room_y[1]);
        if far >= radar.max_range() {
            return Err(Error::Config(format!(
                "room corner at {far:.3} m exceeds the {:.3} m unambiguous range",
                radar.max_range()
            )));
        }
        let band_ok = self.bystander_y[0] >= self.room_y[0] && self.bystander_y[1] <= self.room_y[1];
        if !(band_ok && self.bystander_y[0] < self.bystander_y[1]) {
            return Err(Error::Config("scene.bystander_y must be an increasing band inside room_y".into()));
        }
        Ok(())
    }

    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.room_x[0], self.room_x[1]), p[1].clamp(self.room_y[0], self.room_y[1])]
    }
}

/// Per-person body and style parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Person {
    scale: f64,
    amp: f64,
    tempo: f64,
    centre: [f64; 2],
    reflectivity_jitter: [f64; JOINTS],
}

impl Person {
    fn draw(root: u64, person: usize) -> Self {
        let mut rng = seed::rng(root, "person", person as u64);
        let mut reflectivity_jitter = [1.0; JOINTS];
        for r in &mut reflectivity_jitter {
            *r = rng.random_range(0.8..1.2);
        }
        Self {
            scale: rng.random_range(0.85..1.15),
            amp: rng.random_range(0.8..1.2),
            tempo: rng.random_range(0.85..1.15),
            centre: [rng.random_range(-0.15..0.15), rng.random_range(1.7..1.9)],
            reflectivity_jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureScene {
    pub person_id: usize,
    pub action_id: usize,
    /// Index among the clips of this (person, action) pair.
    pub repeat: usize,
    pub motion: Motion,
    /// Linear amplitude per joint.
    pub reflectivity: [f64; JOINTS],
    /// Joint positions for frames -1..=T; the outer two only feed velocity
    /// differencing.
    track: Vec<[[f64; 2]; JOINTS]>,
    /// Bystander scatterer positions for frames -1..=T.
    bystander: Option<Vec<[[f64; 2]; BYSTANDER_SCATTERERS]>>,
    bystander_amplitude: f64,
    frame_period: f64,
}

impl FigureScene {
    /// Stable clip identifier, e.g. `p03-a07-r01`.
    pub fn id(&self) -> String {
        format!("p{:02}-a{:02}-r{:02}", self.person_id, self.action_id, self.repeat)
    }

    pub fn frames(&self) -> usize {
        self.track.len() - 2
    }

    /// Joint positions, metres, for frames `0..T`.
    pub fn joints(&self) -> &[[[f64; 2]; JOINTS]] {
        &self.track[1..self.track.len() - 1]
    }

    pub fn has_bystander(&self) -> bool {
        self.bystander.is_some()
    }

    /// Scatterer list for frame `t`. Radial velocity is the negated central
    /// difference of range, so approaching joints are positive.
    pub fn scatterers(&self, t: usize) -> Vec<Scatterer> {
        let dt2 = 2.0 * self.frame_period;
        let point = |prev: [f64; 2], cur: [f64; 2], next: [f64; 2], amplitude: f64| {
            let range = cur[0].hypot(cur[1]);
            let dr = next[0].hypot(next[1]) - prev[0].hypot(prev[1]);
            Scatterer {
                range,
                radial_velocity: -dr / dt2,
                azimuth: cur[0].atan2(cur[1]),
                amplitude,
            }
        };
        let mut out: Vec<Scatterer> = (0..JOINTS)
            .map(|j| point(self.track[t][j], self.track[t + 1][j], self.track[t + 2][j], self.reflectivity[j]))
            .collect();
        if let Some(b) = &self.bystander {
            out.extend(
                (0..BYSTANDER_SCATTERERS).map(|i| point(b[t][i], b[t + 1][i], b[t + 2][i], self.bystander_amplitude)),
            );
        }
        out
    }

    /// Labels for the decoder's target frames, `[5, 13, 2]` `(x, y)` in
    /// room-normalised units.
    pub fn labels(&self, cfg: &SceneConfig) -> Vec<f32> {
        labels_from_joints(self.joints(), cfg)
    }

    /// IQ cubes for every frame. Noise for frame `t` is keyed by the root
    /// seed, the clip id and `t`.
    pub fn synthesize(&self, radar: &RadarConfig, root: u64) -> Result<Vec<IqCube>> {
        let tag = format!("iq/{}", self.id());
        (0..self.frames())
            .map(|t| synthesize_frame(&self.scatterers(t), radar, seed::derive(root, &tag, t as u64)))
            .collect()
    }
}

/// Room-normalised `(x, y)` of every joint at the target frames, `[5, 13, 2]`.
pub fn labels_from_joints(joints: &[[[f64; 2]; JOINTS]], cfg: &SceneConfig) -> Vec<f32> {
    let mut out = Vec::with_capacity(TARGET_FRAMES.len() * JOINTS * 2);
    for &f in &TARGET_FRAMES {
        for p in &joints[f] {
            out.push(((p[0] - cfg.room_x[0]) / (cfg.room_x[1] - cfg.room_x[0])) as f32);
            out.push(((p[1] - cfg.room_y[0]) / (cfg.room_y[1] - cfg.room_y[0])) as f32);
        }
    }
    out
}

/// Builds one scene. The figure is drawn from streams keyed by person and
/// clip; the bystander has its own stream, so enabling it never changes the
/// figure.
pub fn make_scene(
    person_id: usize,
    action_id: usize,
    repeat: usize,
    interference: bool,
    root: u64,
    radar: &RadarConfig,
    cfg: &SceneConfig,
) -> Result<FigureScene> {
    let motion = *Motion::ALL
        .get(action_id)
        .ok_or_else(|| Error::Config(format!("action {action_id} has no motion program (max {})", Motion::ALL.len() - 1)))?;
    let person = Person::draw(root, person_id);
    let clip_key = ((person_id * 1000 + action_id) * 1000 + repeat) as u64;
    let mut rng = seed::rng(root, "clip", clip_key);
    let phase0 = rng.random_range(0.0..TAU);
    let jitter = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
    let centre = [person.centre[0] + jitter[0], person.centre[1] + jitter[1]];

    let frame_period = 1.0 / radar.frame_rate;
    let omega = TAU * motion.rate() * person.tempo;
    let track: Vec<[[f64; 2]; JOINTS]> = (-1..=CLIP_FRAMES as i64)
        .map(|t| {
            let phi = phase0 + omega * t as f64 * frame_period;
            let (body, shift) = motion.pose(phi, person.amp);
            let mut frame = [[0.0; 2]; JOINTS];
            for (dst, b) in frame.iter_mut().zip(&body) {
                *dst = cfg.clamp([
                    centre[0] + shift[0] + person.scale * b[0],
                    centre[1] + shift[1] + person.scale * b[1],
                ]);
            }
            frame
        })
        .collect();

    let mut reflectivity = [cfg.limb_reflectivity; JOINTS];
    for j in TORSO {
        reflectivity[j] *= cfg.torso_factor;
    }
    for (r, jit) in reflectivity.iter_mut().zip(&person.reflectivity_jitter) {
        *r *= jit;
    }

    let bystander = interference.then(|| bystander_track(root, clip_key, cfg));
    Ok(FigureScene {
        person_id,
        action_id,
        repeat,
        motion,
        reflectivity,
        track,
        bystander,
        bystander_amplitude: cfg.bystander_amplitude,
        frame_period,
    })
}

fn bystander_track(root: u64, clip_key: u64, cfg: &SceneConfig) -> Vec<[[f64; 2]; BYSTANDER_SCATTERERS]> {
    let mut rng = seed::rng(root, "bystander", clip_key);
    let inner_x = [cfg.room_x[0] + 0.15, cfg.room_x[1] - 0.15];
    let mut c = [
        rng.random_range(inner_x[0]..inner_x[1]),
        rng.random_range(cfg.bystander_y[0]..cfg.bystander_y[1]),
    ];
    let offsets: Vec<[f64; 2]> = (0..BYSTANDER_SCATTERERS)
        .map(|_| {
            let a = rng.random_range(0.0..TAU);
            let r = rng.random_range(0.0..0.15);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let step = Normal::new(0.0, cfg.bystander_step).expect("finite step");
    let limit = 2.0 * cfg.bystander_step;
    // upper-body sway of each scatterer around the walking centre
    let sway: Vec<(f64, f64)> = (0..BYSTANDER_SCATTERERS)
        .map(|_| (rng.random_range(0.0..TAU), rng.random_range(0.3..0.8)))
        .collect();
    (0..CLIP_FRAMES + 2)
        .map(|t| {
            if t > 0 {
                for (a, (lo, hi)) in [(0, (inner_x[0], inner_x[1])), (1, (cfg.bystander_y[0], cfg.bystander_y[1]))] {
                    let d: f64 = step.sample(&mut rng);
                    c[a] = (c[a] + d.clamp(-limit, limit)).clamp(lo, hi);
                }
            }
            let mut pts = [[0.0; 2]; BYSTANDER_SCATTERERS];
            for (i, p) in pts.iter_mut().enumerate() {
                let (ph, hz) = sway[i];
                let wob = 0.05 * (ph + TAU * hz * t as f64 / 10.0).sin();
                *p = cfg.clamp([c[0] + offsets[i][0] + wob, c[1] + offsets[i][1]]);
            }
            pts
        })
        .collect()
}

/// Scenes for every (person, action, repeat) triple, person-major. IQ is
/// produced on demand with [`FigureScene::synthesize`]; a full-size cube
/// sequence for a few hundred clips would not fit in memory.
pub fn generate_dataset(
    persons: usize,
    actions: usize,
    clips_per_pair: usize,
    interference: bool,
    root: u64,
    radar: &RadarConfig,
    cfg: &SceneConfig,
) -> Result<Vec<FigureScene>> {
    if persons == 0 || actions == 0 || clips_per_pair == 0 {
        return Err(Error::Config("persons, actions and clips_per_pair must be >= 1".into()));
    }
    if actions > Motion::ALL.len() {
        return Err(Error::Config(format!("at most {} actions are available", Motion::ALL.len())));
    }
    radar.validate()?;
    cfg.validate(radar)?;
    let mut out = Vec::with_capacity(persons * actions * clips_per_pair);
    for p in 0..persons {
        for a in 0..actions {
            for r in 0..clips_per_pair {
                out.push(make_scene(p, a, r, interference, root, radar, cfg)?);
            }
        }
    }
    Ok(out)
}

/// Largest joint speed in a scene, m/s.
pub fn peak_speed(scene: &FigureScene) -> f64 {
    let dt = scene.frame_period;
    scene
        .track
        .windows(2)
        .flat_map(|w| (0..JOINTS).map(move |j| (w[1][j][0] - w[0][j][0]).hypot(w[1][j][1] - w[0][j][1]) / dt))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn compact() -> RadarConfig {
        RadarConfig { noise_std: 0.0, ..RadarConfig::compact() }
    }

    #[test]
    fn skeleton_is_a_spanning_tree() {
        let mut adj = vec![Vec::new(); JOINTS];
        for &(a, b) in &SKELETON_EDGES {
            assert_ne!(a, b);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = [false; JOINTS];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(SKELETON_EDGES.len(), JOINTS - 1);
    }

    #[test]
    fn dataset_counts() {
        let scenes = generate_dataset(9, 10, 4, false, 42, &compact(), &SceneConfig::default()).unwrap();
        assert_eq!(scenes.len(), 360);
        assert!(scenes.iter().all(|s| s.frames() == 20 && s.joints().len() == 20));
        assert!(generate_dataset(0, 10, 4, false, 42, &compact(), &SceneConfig::default()).is_err());
        assert!(generate_dataset(2, 11, 1, false, 42, &compact(), &SceneConfig::default()).is_err());
    }

    #[test]
    fn joints_stay_in_room_and_below_alias_speed() {
        let radar = compact();
        let cfg = SceneConfig::default();
        for seed in [1, 2, 42] {
            for s in generate_dataset(9, 10, 2, true, seed, &radar, &cfg).unwrap() {
                for f in s.joints() {
                    for p in f {
                        assert!(p[0] >= cfg.room_x[0] && p[0] <= cfg.room_x[1]);
                        assert!(p[1] >= cfg.room_y[0] && p[1] <= cfg.room_y[1]);
                    }
                }
                assert!(peak_speed(&s) < 0.9 * radar.max_velocity(), "{} {}", s.id(), peak_speed(&s));
                for t in 0..s.frames() {
                    for sc in s.scatterers(t) {
                        assert!(sc.radial_velocity.abs() < radar.max_velocity());
                        assert!(sc.range < radar.max_range());
                    }
                }
                let labels = s.labels(&cfg);
                assert!(labels.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn interference_leaves_labels_alone() {
        let radar = compact();
        let cfg = SceneConfig::default();
        let clean = generate_dataset(2, 3, 1, false, 5, &radar, &cfg).unwrap();
        let noisy = generate_dataset(2, 3, 1, true, 5, &radar, &cfg).unwrap();
        for (a, b) in clean.iter().zip(&noisy) {
            assert_eq!(a.labels(&cfg), b.labels(&cfg));
            assert_eq!(a.joints(), b.joints());
            assert_eq!(b.scatterers(0).len(), JOINTS + BYSTANDER_SCATTERERS);
        }
    }

    #[test]
    fn same_seed_same_iq() {
        let radar = RadarConfig::compact();
        let cfg = SceneConfig::default();
        let a = make_scene(1, 2, 0, true, 9, &radar, &cfg).unwrap();
        let b = make_scene(1, 2, 0, true, 9, &radar, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.synthesize(&radar, 9).unwrap(), b.synthesize(&radar, 9).unwrap());
        let c = make_scene(1, 2, 0, true, 10, &radar, &cfg).unwrap();
        assert_ne!(a.labels(&cfg), c.labels(&cfg));
    }

    #[test]
    fn approaching_joint_has_positive_velocity() {
        let radar = compact();
        let cfg = SceneConfig::default();
        let s = make_scene(0, 0, 0, false, 3, &radar, &cfg).unwrap();
        for t in 0..s.frames() {
            let sc = s.scatterers(t);
            let r_prev = s.track[t][L_WRI][0].hypot(s.track[t][L_WRI][1]);
            let r_next = s.track[t + 2][L_WRI][0].hypot(s.track[t + 2][L_WRI][1]);
            if r_next < r_prev - 1e-6 {
                assert!(sc[L_WRI].radial_velocity > 0.0);
            }
        }
    }

    #[test]
    fn room_must_fit_unambiguous_range() {
        let radar = compact();
        let cfg = SceneConfig { room_y: [1.0, 3.5], ..SceneConfig::default() };
        assert!(matches!(cfg.validate(&radar), Err(Error::Config(_))));
    }
}
