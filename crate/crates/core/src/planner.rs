//! Lightweight trajectory decoder and the composite trajectory loss.
//!
//! Learnable trajectory queries cross-attend (single head) to projected
//! decoder hidden states; a linear head maps the result to T_r waypoints of
//! (x, y, heading) in the ego frame, x forward, y lateral. The composite
//! loss combines smooth-L1 terms over all coordinates, the lateral
//! coordinate, first differences (velocity), and the final waypoint, with
//! configurable weights. The analytic gradient is verified against central
//! finite differences in the test suite.

use crate::error::{Error, Result};
use crate::numerics::{matmul, rms_norm, softmax_rows, Matrix2D};
use crate::rng::RngSeed;
use crate::transformer::{ffn_forward, LayerWeights, WEIGHT_INIT_STD};

/// Waypoint layout: x (forward), y (lateral), heading.
pub const WAYPOINT_DIM: usize = 3;
/// Column index of the lateral coordinate.
pub const LATERAL_AXIS: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Number of waypoints T_r; at least 2 (the velocity term needs
    /// differences).
    pub trajectory_len: usize,
    /// Query embedding width.
    pub query_dim: usize,
    /// FFN width inside the decoder blocks.
    pub ffn_dim: usize,
    /// Number of cross-attention blocks.
    pub decoder_layers: usize,
    /// Weight of the lateral loss term.
    pub lambda_lateral: f64,
    /// Weight of the velocity smoothness term.
    pub lambda_velocity: f64,
    /// Weight of the endpoint term.
    pub lambda_endpoint: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            trajectory_len: 8,
            query_dim: 32,
            ffn_dim: 64,
            decoder_layers: 2,
            lambda_lateral: 2.0,
            lambda_velocity: 0.5,
            lambda_endpoint: 1.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectory_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "trajectory_len {} < 2",
                self.trajectory_len
            )));
        }
        Ok(())
    }

    pub fn lambdas(&self) -> LossWeights {
        LossWeights {
            lateral: self.lambda_lateral,
            velocity: self.lambda_velocity,
            endpoint: self.lambda_endpoint,
        }
    }
}

/// Predicted or ground-truth trajectory: T_r rows of (x, y, heading).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Matrix2D,
}

impl Trajectory {
    pub fn new(waypoints: Matrix2D) -> Result<Self> {
        if waypoints.cols() != WAYPOINT_DIM {
            return Err(Error::ShapeMismatch {
                op: "trajectory",
                left_rows: waypoints.rows(),
                left_cols: WAYPOINT_DIM,
                right_rows: waypoints.rows(),
                right_cols: waypoints.cols(),
            });
        }
        if !waypoints.is_finite() {
            return Err(Error::Precondition("trajectory has non-finite entries".into()));
        }
        Ok(Trajectory { waypoints })
    }

    pub fn len(&self) -> usize {
        self.waypoints.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with header `t,x,y,heading`, one row per waypoint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,heading\n");
        for i in 0..self.len() {
            let r = self.waypoints.row(i);
            out.push_str(&format!("{},{},{},{}\n", i, r[0], r[1], r[2]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if ln == 0 {
                if line.trim() != "t,x,y,heading" {
                    return Err(Error::Precondition(format!(
                        "unexpected trajectory csv header: {line}"
                    )));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Precondition(format!(
                    "trajectory csv line {ln} has {} fields",
                    fields.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Precondition(format!("csv line {ln}: {e}")))
            };
            rows.push(vec![parse(fields[1])?, parse(fields[2])?, parse(fields[3])?]);
        }
        Trajectory::new(Matrix2D::from_rows(&rows)?)
    }
}

/// Planner weights: queries, memory projection, decoder blocks, output head.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerWeights {
    pub queries: Matrix2D,
    pub memory_proj: Matrix2D,
    pub layers: Vec<LayerWeights>,
    pub head_weight: Matrix2D,
    pub head_bias: [f64; WAYPOINT_DIM],
}

impl PlannerWeights {
    pub fn init(cfg: &PlannerConfig, memory_dim: usize, seed: RngSeed) -> Self {
        let m = cfg.query_dim;
        let mut rng = seed.derive("planner").rng();
        let queries = Matrix2D::randn(cfg.trajectory_len, m, WEIGHT_INIT_STD, &mut rng);
        let memory_proj = Matrix2D::randn(memory_dim, m, WEIGHT_INIT_STD, &mut rng);
        let base = seed.derive("planner-layers");
        let layers = (0..cfg.decoder_layers)
            .map(|i| LayerWeights::init(m, cfg.ffn_dim, base.derive_index(i as u64)))
            .collect();
        let head_weight = Matrix2D::randn(m, WAYPOINT_DIM, WEIGHT_INIT_STD, &mut rng);
        PlannerWeights { queries, memory_proj, layers, head_weight, head_bias: [0.0; 3] }
    }

    pub fn zeros(cfg: &PlannerConfig, memory_dim: usize) -> Self {
        PlannerWeights {
            queries: Matrix2D::zeros(cfg.trajectory_len, cfg.query_dim),
            memory_proj: Matrix2D::zeros(memory_dim, cfg.query_dim),
            layers: (0..cfg.decoder_layers)
                .map(|_| LayerWeights::zeros(cfg.query_dim, cfg.ffn_dim))
                .collect(),
            head_weight: Matrix2D::zeros(cfg.query_dim, WAYPOINT_DIM),
            head_bias: [0.0; 3],
        }
    }
}

/// Cross-attend the trajectory queries to the memory and decode waypoints.
pub fn decode_trajectory(
    memory: &Matrix2D,
    cfg: &PlannerConfig,
    weights: &PlannerWeights,
) -> Result<Trajectory> {
    cfg.validate()?;
    if memory.rows() == 0 {
        return Err(Error::Precondition("planner memory is empty".into()));
    }
    if memory.cols() != weights.memory_proj.rows() {
        return Err(Error::ShapeMismatch {
            op: "decode_trajectory",
            left_rows: memory.rows(),
            left_cols: memory.cols(),
            right_rows: weights.memory_proj.rows(),
            right_cols: weights.memory_proj.cols(),
        });
    }
    let mem = matmul(memory, &weights.memory_proj)?;
    let scale = 1.0 / (cfg.query_dim as f64).sqrt();

    let mut x = weights.queries.clone();
    for layer in &weights.layers {
        let normed = rms_norm(&x, &layer.attn_norm_gain)?;
        let q = matmul(&normed, &layer.wq)?;
        let k = matmul(&mem, &layer.wk)?;
        let v = matmul(&mem, &layer.wv)?;
        let logits = matmul(&q, &k.transpose())?.scale(scale);
        let attn = softmax_rows(&logits)?;
        let att = matmul(&matmul(&attn, &v)?, &layer.wo)?;
        let after = x.add(&att)?;
        let normed2 = rms_norm(&after, &layer.ffn_norm_gain)?;
        let f = ffn_forward(&normed2, layer, None)?;
        x = after.add(&f)?;
    }

    let mut waypoints = matmul(&x, &weights.head_weight)?;
    for i in 0..waypoints.rows() {
        for (v, b) in waypoints.row_mut(i).iter_mut().zip(&weights.head_bias) {
            *v += b;
        }
    }
    Trajectory::new(waypoints)
}

/// Weights of the three auxiliary loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lateral: f64,
    pub velocity: f64,
    pub endpoint: f64,
}

/// Individual loss terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Smooth-L1 over all coordinates.
    pub trajectory: f64,
    /// Smooth-L1 over the lateral coordinate.
    pub lateral: f64,
    /// Smooth-L1 over first differences of the waypoints.
    pub velocity: f64,
    /// Smooth-L1 over the final waypoint.
    pub endpoint: f64,
    pub total: f64,
}

fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

fn check_same_shape(pred: &Trajectory, gt: &Trajectory) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            op: "composite_loss",
            left_rows: pred.len(),
            left_cols: WAYPOINT_DIM,
            right_rows: gt.len(),
            right_cols: WAYPOINT_DIM,
        });
    }
    if pred.len() < 2 {
        return Err(Error::Precondition("trajectory shorter than 2 waypoints".into()));
    }
    Ok(())
}

/// Composite loss: trajectory + lateral + velocity + endpoint terms.
pub fn composite_loss(pred: &Trajectory, gt: &Trajectory, w: &LossWeights) -> Result<LossParts> {
    check_same_shape(pred, gt)?;
    let n = pred.len();
    let p = &pred.waypoints;
    let g = &gt.waypoints;

    let mut traj = 0.0;
    for i in 0..n {
        for c in 0..WAYPOINT_DIM {
            traj += smooth_l1(p.at(i, c) - g.at(i, c));
        }
    }
    traj /= (n * WAYPOINT_DIM) as f64;

    let mut lateral = 0.0;
    for i in 0..n {
        lateral += smooth_l1(p.at(i, LATERAL_AXIS) - g.at(i, LATERAL_AXIS));
    }
    lateral /= n as f64;

    let mut velocity = 0.0;
    for i in 0..n - 1 {
        for c in 0..WAYPOINT_DIM {
            let dp = p.at(i + 1, c) - p.at(i, c);
            let dg = g.at(i + 1, c) - g.at(i, c);
            velocity += smooth_l1(dp - dg);
        }
    }
    velocity /= ((n - 1) * WAYPOINT_DIM) as f64;

    let mut endpoint = 0.0;
    for c in 0..WAYPOINT_DIM {
        endpoint += smooth_l1(p.at(n - 1, c) - g.at(n - 1, c));
    }
    endpoint /= WAYPOINT_DIM as f64;

    let total = traj + w.lateral * lateral + w.velocity * velocity + w.endpoint * endpoint;
    Ok(LossParts { trajectory: traj, lateral, velocity, endpoint, total })
}

/// Analytic gradient of [`composite_loss`] with respect to the prediction.
pub fn loss_gradient(pred: &Trajectory, gt: &Trajectory, w: &LossWeights) -> Result<Matrix2D> {
    check_same_shape(pred, gt)?;
    let n = pred.len();
    let p = &pred.waypoints;
    let g = &gt.waypoints;
    let mut grad = Matrix2D::zeros(n, WAYPOINT_DIM);

    let traj_scale = 1.0 / (n * WAYPOINT_DIM) as f64;
    for i in 0..n {
        for c in 0..WAYPOINT_DIM {
            let d = smooth_l1_grad(p.at(i, c) - g.at(i, c)) * traj_scale;
            grad.set(i, c, grad.at(i, c) + d);
        }
    }

    let lat_scale = w.lateral / n as f64;
    for i in 0..n {
        let d = smooth_l1_grad(p.at(i, LATERAL_AXIS) - g.at(i, LATERAL_AXIS)) * lat_scale;
        grad.set(i, LATERAL_AXIS, grad.at(i, LATERAL_AXIS) + d);
    }

    let vel_scale = w.velocity / ((n - 1) * WAYPOINT_DIM) as f64;
    for i in 0..n - 1 {
        for c in 0..WAYPOINT_DIM {
            let dp = p.at(i + 1, c) - p.at(i, c);
            let dg = g.at(i + 1, c) - g.at(i, c);
            let d = smooth_l1_grad(dp - dg) * vel_scale;
            grad.set(i + 1, c, grad.at(i + 1, c) + d);
            grad.set(i, c, grad.at(i, c) - d);
        }
    }

    let end_scale = w.endpoint / WAYPOINT_DIM as f64;
    for c in 0..WAYPOINT_DIM {
        let d = smooth_l1_grad(p.at(n - 1, c) - g.at(n - 1, c)) * end_scale;
        grad.set(n - 1, c, grad.at(n - 1, c) + d);
    }

    Ok(grad)
}

/// Post-hoc trajectory refinement stage. The default implementation is a
/// pass-through; scoring-model-driven refiners plug in here.
pub trait TrajectoryRefiner {
    fn refine(&self, trajectory: &Trajectory) -> Trajectory;
}

/// Refiner that returns the trajectory unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopRefiner;

impl TrajectoryRefiner for NoopRefiner {
    fn refine(&self, trajectory: &Trajectory) -> Trajectory {
        trajectory.clone()
    }
}
