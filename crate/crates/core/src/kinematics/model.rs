use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("non-finite configuration entry at index {0}")]
    NonFinite(usize),
    #[error("configuration has {got} entries, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
}

fn schema_err(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Floating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginDocument {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl OriginDocument {
    fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, yaw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDocument {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub parent: Option<usize>,
    pub origin: OriginDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_limits: Option<[f64; 2]>,
    pub velocity_limit: f64,
    #[serde(default)]
    pub passive: bool,
    pub mass: f64,
    pub com: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDocument {
    pub name: String,
    pub joint: usize,
    pub origin: OriginDocument,
}

/// On-disk robot description (`schema: 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub joints: Vec<JointDocument>,
    pub frames: Vec<FrameDocument>,
}

/// Validated joint with its placement in the configuration and velocity vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: Option<usize>,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub position_limits: (f64, f64),
    pub velocity_limit: f64,
    pub passive: bool,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub q_index: usize,
    pub v_index: usize,
}

impl Joint {
    pub fn nq(&self) -> usize {
        match self.kind {
            JointKind::Revolute => 1,
            JointKind::Floating => 7,
        }
    }

    pub fn nv(&self) -> usize {
        match self.kind {
            JointKind::Revolute => 1,
            JointKind::Floating => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Frame {
    pub name: String,
    pub joint: usize,
    pub offset: Isometry3<f64>,
}

/// Immutable kinematic tree.
///
/// Configuration layout: a floating joint takes `[x, y, z, qw, qx, qy, qz]` in `q`
/// and `[vx, vy, vz, ωx, ωy, ωz]` (world frame) in the velocity vector; a revolute
/// joint takes one entry in each.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    document: ModelDocument,
    joints: Vec<Joint>,
    pub(crate) frames: Vec<Frame>,
    pub(crate) order: Vec<usize>,
    pub(crate) supports: Vec<Vec<usize>>,
    nq: usize,
    nv: usize,
    total_mass: f64,
    orientation_link: usize,
}

fn finite3(path: &str, v: &[f64; 3]) -> Result<(), ModelError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(schema_err(path, "non-finite value"))
    }
}

impl RobotModel {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let document: ModelDocument = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema_err(
                if path.is_empty() { "$".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        Self::from_document(document)
    }

    pub fn from_document(document: ModelDocument) -> Result<Self, ModelError> {
        if document.schema != MODEL_SCHEMA {
            return Err(schema_err(
                "schema",
                format!("unsupported schema {}, expected {MODEL_SCHEMA}", document.schema),
            ));
        }
        let n = document.joints.len();
        if n == 0 {
            return Err(schema_err("joints", "model has no joints"));
        }

        let mut joints = Vec::with_capacity(n);
        let (mut nq, mut nv) = (0, 0);
        for (i, jd) in document.joints.iter().enumerate() {
            let path = format!("joints[{i}]");
            if jd.name.is_empty() {
                return Err(schema_err(format!("{path}.name"), "empty name"));
            }
            if document.joints[..i].iter().any(|o| o.name == jd.name) {
                return Err(schema_err(
                    format!("{path}.name"),
                    format!("duplicate joint `{}`", jd.name),
                ));
            }
            match jd.parent {
                Some(p) if p >= n => {
                    return Err(schema_err(format!("{path}.parent"), format!("index {p} out of range")))
                }
                Some(p) if p == i => return Err(schema_err(format!("{path}.parent"), "joint is its own parent")),
                _ => {}
            }
            finite3(&format!("{path}.origin.xyz"), &jd.origin.xyz)?;
            finite3(&format!("{path}.origin.rpy"), &jd.origin.rpy)?;
            finite3(&format!("{path}.com"), &jd.com)?;
            if !(jd.velocity_limit.is_finite() && jd.velocity_limit > 0.0) {
                return Err(schema_err(
                    format!("{path}.velocity_limit"),
                    "must be finite and positive",
                ));
            }
            if !(jd.mass.is_finite() && jd.mass >= 0.0) {
                return Err(schema_err(format!("{path}.mass"), "must be finite and non-negative"));
            }
            let (axis, position_limits) = match jd.kind {
                JointKind::Revolute => {
                    let a = jd
                        .axis
                        .ok_or_else(|| schema_err(format!("{path}.axis"), "revolute joint needs an axis"))?;
                    finite3(&format!("{path}.axis"), &a)?;
                    let a = Vector3::from(a);
                    if a.norm() < 1e-9 {
                        return Err(schema_err(format!("{path}.axis"), "zero axis"));
                    }
                    let [lo, hi] = jd.position_limits.ok_or_else(|| {
                        schema_err(
                            format!("{path}.position_limits"),
                            "revolute joint needs position limits",
                        )
                    })?;
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(schema_err(format!("{path}.position_limits"), "not a proper interval"));
                    }
                    (Unit::new_normalize(a), (lo, hi))
                }
                JointKind::Floating => {
                    if jd.parent.is_some() {
                        return Err(schema_err(format!("{path}.type"), "a floating joint must be the root"));
                    }
                    if jd.axis.is_some() || jd.position_limits.is_some() {
                        return Err(schema_err(path, "floating joint takes no axis or position limits"));
                    }
                    (Vector3::z_axis(), (f64::NEG_INFINITY, f64::INFINITY))
                }
            };
            let joint = Joint {
                name: jd.name.clone(),
                kind: jd.kind,
                parent: jd.parent,
                origin: jd.origin.isometry(),
                axis,
                position_limits,
                velocity_limit: jd.velocity_limit,
                passive: jd.passive,
                mass: jd.mass,
                com: Vector3::from(jd.com),
                q_index: nq,
                v_index: nv,
            };
            nq += joint.nq();
            nv += joint.nv();
            joints.push(joint);
        }

        let roots: Vec<usize> = (0..n).filter(|&i| joints[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(schema_err(
                "joints",
                format!("expected exactly one root joint, found {}", roots.len()),
            ));
        }

        // ancestors, root first; a walk longer than n means a cycle
        let mut supports = Vec::with_capacity(n);
        for i in 0..n {
            let mut chain = vec![i];
            let mut cur = i;
            while let Some(p) = joints[cur].parent {
                if chain.len() > n {
                    return Err(schema_err(
                        format!("joints[{i}].parent"),
                        "parent chain contains a cycle",
                    ));
                }
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            supports.push(chain);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (supports[i].len(), i));

        let total_mass: f64 = joints.iter().map(|j| j.mass).sum();
        if !(total_mass > 0.0) {
            return Err(schema_err("joints", "total mass must be positive"));
        }

        let mut frames = Vec::with_capacity(document.frames.len());
        for (i, fd) in document.frames.iter().enumerate() {
            let path = format!("frames[{i}]");
            if fd.name.is_empty() {
                return Err(schema_err(format!("{path}.name"), "empty name"));
            }
            if document.frames[..i].iter().any(|o| o.name == fd.name) {
                return Err(schema_err(
                    format!("{path}.name"),
                    format!("duplicate frame `{}`", fd.name),
                ));
            }
            if fd.joint >= n {
                return Err(schema_err(
                    format!("{path}.joint"),
                    format!("index {} out of range", fd.joint),
                ));
            }
            finite3(&format!("{path}.origin.xyz"), &fd.origin.xyz)?;
            finite3(&format!("{path}.origin.rpy"), &fd.origin.rpy)?;
            frames.push(Frame {
                name: fd.name.clone(),
                joint: fd.joint,
                offset: fd.origin.isometry(),
            });
        }
        let orientation_link = frames
            .iter()
            .find(|f| f.name == "pelvis")
            .map(|f| f.joint)
            .unwrap_or(roots[0]);

        Ok(Self {
            document,
            joints,
            frames,
            order,
            supports,
            nq,
            nv,
            total_mass,
            orientation_link,
        })
    }

    /// Canonical pretty-printed JSON; loading it gives back an identical model.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.document).expect("model document serialises");
        text.push('\n');
        text
    }

    pub fn document(&self) -> &ModelDocument {
        &self.document
    }

    pub fn name(&self) -> &str {
        &self.document.name
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Number of velocity degrees of freedom.
    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn joint_id(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn frame_id(&self, name: &str) -> Result<usize, ModelError> {
        self.frames
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| ModelError::UnknownFrame(name.to_string()))
    }

    pub fn frame_names(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.name.as_str())
    }

    /// Joint carrying the frame.
    pub fn frame_joint(&self, frame: usize) -> usize {
        self.frames[frame].joint
    }

    /// Joint whose link orientation stands in for the CoM frame orientation
    /// (the `pelvis` frame's link when present, otherwise the root).
    pub fn orientation_link(&self) -> usize {
        self.orientation_link
    }

    /// Ancestors of a joint, root first, including the joint itself.
    pub fn support(&self, joint: usize) -> &[usize] {
        &self.supports[joint]
    }

    pub fn passive_joints(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.joints.len()).filter(|&i| self.joints[i].passive)
    }

    pub fn floating_base(&self) -> Option<usize> {
        self.joints.iter().position(|j| j.kind == JointKind::Floating)
    }

    /// Identity base pose at the origin; revolute joints at zero, moved inside their limits.
    pub fn neutral_configuration(&self) -> nalgebra::DVector<f64> {
        let mut q = nalgebra::DVector::zeros(self.nq);
        for j in &self.joints {
            match j.kind {
                JointKind::Floating => q[j.q_index + 3] = 1.0,
                JointKind::Revolute => q[j.q_index] = 0.0f64.clamp(j.position_limits.0, j.position_limits.1),
            }
        }
        q
    }

    /// Human-readable names of the configuration coordinates.
    pub fn q_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.nq);
        for j in &self.joints {
            match j.kind {
                JointKind::Revolute => out.push(j.name.clone()),
                JointKind::Floating => {
                    for s in ["x", "y", "z", "qw", "qx", "qy", "qz"] {
                        out.push(format!("{}_{s}", j.name));
                    }
                }
            }
        }
        out
    }

    /// Human-readable names of the velocity coordinates.
    pub fn v_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.nv);
        for j in &self.joints {
            match j.kind {
                JointKind::Revolute => out.push(j.name.clone()),
                JointKind::Floating => {
                    for s in ["vx", "vy", "vz", "wx", "wy", "wz"] {
                        out.push(format!("{}_{s}", j.name));
                    }
                }
            }
        }
        out
    }

    /// Base pose stored in a configuration vector.
    pub fn base_pose(&self, q: &nalgebra::DVector<f64>) -> Option<Isometry3<f64>> {
        let b = &self.joints[self.floating_base()?];
        let i = b.q_index;
        let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[i + 3], q[i + 4], q[i + 5], q[i + 6]));
        Some(Isometry3::from_parts(Translation3::new(q[i], q[i + 1], q[i + 2]), rot))
    }

    pub fn set_base_pose(&self, q: &mut nalgebra::DVector<f64>, pose: &Isometry3<f64>) {
        if let Some(b) = self.floating_base() {
            let i = self.joints[b].q_index;
            let t = pose.translation.vector;
            let r = pose.rotation.quaternion();
            q[i] = t.x;
            q[i + 1] = t.y;
            q[i + 2] = t.z;
            q[i + 3] = r.w;
            q[i + 4] = r.i;
            q[i + 5] = r.j;
            q[i + 6] = r.k;
        }
    }

    pub(crate) fn check_configuration(&self, q: &nalgebra::DVector<f64>) -> Result<(), ModelError> {
        if q.len() != self.nq {
            return Err(ModelError::Dimension {
                got: q.len(),
                expected: self.nq,
            });
        }
        if let Some(i) = q.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(())
    }
}

const REDUCED_BIPED: &str = include_str!("../../fixtures/reduced_biped.json");
const PENDULUM: &str = include_str!("../../fixtures/pendulum.json");

impl RobotModel {
    /// Bundled 18-dof biped: floating base plus hip yaw/roll/pitch, knee and two
    /// passive ankle joints per leg.
    pub fn reduced_biped() -> Self {
        Self::from_json_str(REDUCED_BIPED).expect("bundled biped model is valid")
    }

    /// Bundled single revolute joint about +y with a `swing_foot` frame 1 m below.
    pub fn pendulum() -> Self {
        Self::from_json_str(PENDULUM).expect("bundled pendulum model is valid")
    }

    pub fn reduced_biped_json() -> &'static str {
        REDUCED_BIPED
    }

    pub fn pendulum_json() -> &'static str {
        PENDULUM
    }
}
