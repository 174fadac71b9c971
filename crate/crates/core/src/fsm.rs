//! Episode state machine.
//!
//! One attempt runs detect, grasp, in-hand control and classification on a
//! simulated bowl. Failures send the machine back to `Detect` until the
//! retry cap is spent; the two sentinel classes send it back to `Initial`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::dataset::perceive_frame;
use crate::classifier::metrics::ConfusionMatrix;
use crate::classifier::Classifier;
use crate::controller::{run_closed_loop, Controller, ControllerParams, LoopOutcome, Plant, TraceRecord};
use crate::error::{Error, Result};
use crate::grasp_planner::{plan_grasp, GraspTarget, DEFAULT_K};
use crate::kinematics::{GripperModel, Side};
use crate::rng::stream;
use crate::simworld::catalog::{NUM_CLASSES, PLANE, TWO_OBJECTS};
use crate::simworld::grasp::depth_dropout;
use crate::simworld::{
    close_on_grasp, grasp_attempt, render_heightmap, render_tactile, spawn_bowl, GraspOutcome, GraspedObject,
    HandPlant, Scenario, SimObject, WorldState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeParams {
    /// Regrasps allowed after a failed grasp or control phase.
    pub retry_cap: usize,
    /// Depth-camera re-reads allowed per attempt.
    pub max_detect_cycles: usize,
    /// Post-grasp dwell before the sensor is trusted, s.
    pub settle_time: f64,
    /// Height map cells averaged for the grasp point.
    pub top_k: usize,
    /// A second cluster at least this share of the largest one's pixels
    /// means two objects are held.
    pub two_cluster_ratio: f64,
    pub detect_time: f64,
    /// Wrist turn plus descent, s.
    pub approach_time: f64,
    pub close_time: f64,
    pub classify_time: f64,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            retry_cap: 3,
            max_detect_cycles: 10,
            settle_time: 2.0,
            top_k: DEFAULT_K,
            two_cluster_ratio: 0.25,
            detect_time: 0.5,
            approach_time: 4.0,
            close_time: 1.0,
            classify_time: 0.1,
        }
    }
}

impl EpisodeParams {
    pub fn validate(&self) -> Result<()> {
        let times = [
            self.settle_time,
            self.detect_time,
            self.approach_time,
            self.close_time,
            self.classify_time,
        ];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidParameter("episode durations must be finite and >= 0".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidParameter("top_k must be positive".into()));
        }
        if !(self.two_cluster_ratio > 0.0 && self.two_cluster_ratio <= 1.0) {
            return Err(Error::InvalidParameter("two_cluster_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    Initial,
    Detect,
    ReadyForGrasp,
    Grasp,
    Control,
    Classification,
    Sorted,
}

impl FsmState {
    pub const ALL: [FsmState; 7] = [
        FsmState::Initial,
        FsmState::Detect,
        FsmState::ReadyForGrasp,
        FsmState::Grasp,
        FsmState::Control,
        FsmState::Classification,
        FsmState::Sorted,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Start,
    InadequateDepth,
    ValidTarget,
    WristAligned,
    NoContact,
    ContactDetected,
    Converged,
    Timeout,
    LostContact,
    Classified(u8),
    Reset,
}

/// The transition table. Anything not listed is an `InvalidEvent`.
pub fn transition(state: FsmState, event: Event) -> Result<FsmState> {
    use Event as E;
    use FsmState as S;
    let next = match (state, event) {
        (S::Initial, E::Start) => S::Detect,
        (S::Detect, E::InadequateDepth) => S::Detect,
        (S::Detect, E::ValidTarget) => S::ReadyForGrasp,
        (S::ReadyForGrasp, E::WristAligned) => S::Grasp,
        (S::Grasp, E::NoContact) => S::Detect,
        (S::Grasp, E::ContactDetected) => S::Control,
        (S::Control, E::Converged) => S::Classification,
        (S::Control, E::Timeout | E::LostContact) => S::Detect,
        (S::Classification, E::Classified(c)) if c == TWO_OBJECTS || c == PLANE => S::Initial,
        (S::Classification, E::Classified(c)) if (1..TWO_OBJECTS).contains(&c) => S::Sorted,
        (S::Sorted, E::Reset) => S::Initial,
        _ => {
            return Err(Error::InvalidEvent {
                state: format!("{state:?}"),
                event: format!("{event:?}"),
            })
        }
    };
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Sorted { class: u8 },
    GraspFail,
    TwoObjects,
    PlaneDetected,
    ControlTimeout,
}

/// Simulated seconds spent in each state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateDurations {
    pub detect: f64,
    pub ready_for_grasp: f64,
    pub grasp: f64,
    pub control: f64,
    pub classification: f64,
}

impl StateDurations {
    pub fn total(&self) -> f64 {
        self.detect + self.ready_for_grasp + self.grasp + self.control + self.classification
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: FsmState,
    pub event: Event,
    pub to: FsmState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub attempt_id: u64,
    pub seed: u64,
    pub outcome: Outcome,
    pub final_state: FsmState,
    /// What was in the hand at classification: the object class, or 21.
    pub true_class: Option<u8>,
    pub predicted_class: Option<u8>,
    pub confidence: Option<f64>,
    pub retries: usize,
    pub grasp_cycles: usize,
    pub control_steps: usize,
    pub final_theta: Option<f64>,
    pub durations: StateDurations,
    pub transitions: Vec<TransitionRecord>,
    /// Relative path of the control trace file, when control ran.
    pub trace: Option<String>,
}

/// One control phase of an attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrace {
    pub grasp_cycle: usize,
    pub outcome: LoopOutcome,
    pub records: Vec<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub report: EpisodeReport,
    pub traces: Vec<ControlTrace>,
}

pub fn trace_path(attempt_id: u64) -> String {
    format!("traces/attempt-{attempt_id:05}.jsonl")
}

/// Fixed inputs shared by every attempt.
#[derive(Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a GripperModel,
    pub controller: &'a ControllerParams,
    pub classifier: &'a Classifier,
}

struct Machine {
    state: FsmState,
    transitions: Vec<TransitionRecord>,
}

impl Machine {
    fn fire(&mut self, event: Event) -> Result<FsmState> {
        let to = transition(self.state, event)?;
        self.transitions.push(TransitionRecord {
            from: self.state,
            event,
            to,
        });
        self.state = to;
        Ok(to)
    }
}

/// Put held objects back into the pile. A full bowl loses them.
fn return_to_bowl(world: &mut WorldState, objects: &[SimObject], rng: &mut impl Rng) -> Result<()> {
    for o in objects {
        match world.place(o.id, o.class_id, o.shape, rng) {
            Ok(()) | Err(Error::OverfilledBowl { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn held(grasped: &[GraspedObject]) -> Vec<SimObject> {
    grasped.iter().map(|g| g.object.clone()).collect()
}

/// Run one attempt on `world` until a terminal outcome or the retry cap.
/// Sorted objects leave the world; everything else goes back in the bowl.
pub fn run_episode(world: &mut WorldState, ctx: &EpisodeContext<'_>, attempt_id: u64, seed: u64) -> Result<EpisodeResult> {
    let p = &ctx.scenario.episode;
    let gp = &ctx.scenario.grasp;
    let perception = &ctx.scenario.dataset.perception;
    let mut rng_grasp = stream(seed, "grasp");
    let mut rng_depth = stream(seed, "depth");
    let mut rng_bowl = stream(seed, "return");
    let mut rng_classify = stream(seed, "classify");

    let mut m = Machine {
        state: FsmState::Initial,
        transitions: Vec::new(),
    };
    let mut d = StateDurations::default();
    let mut traces = Vec::new();
    let mut retries = 0;
    let mut detect_cycles = 0;
    let mut grasp_cycles = 0;
    let mut control_steps = 0;
    let mut final_theta = None;
    let mut target: Option<GraspTarget> = None;
    let mut plant: Option<HandPlant> = None;

    m.fire(Event::Start)?;
    let (outcome, classification) = loop {
        match m.state {
            FsmState::Detect => {
                if world.objects.is_empty() {
                    return Err(Error::WorldExhausted);
                }
                d.detect += p.detect_time;
                let plan = if depth_dropout(gp, &mut rng_depth) {
                    None
                } else {
                    match plan_grasp(&render_heightmap(world), world.bowl.p_cen(), p.top_k) {
                        Ok(plan) => Some(plan),
                        Err(Error::EmptyRegion) => None,
                        Err(e) => return Err(e),
                    }
                };
                match plan {
                    Some(plan) => {
                        target = Some(plan.target);
                        m.fire(Event::ValidTarget)?;
                    }
                    None => {
                        detect_cycles += 1;
                        if detect_cycles > p.max_detect_cycles {
                            break (Outcome::GraspFail, None);
                        }
                        m.fire(Event::InadequateDepth)?;
                    }
                }
            }
            FsmState::ReadyForGrasp => {
                // The wrist turns to theta on the way down.
                d.ready_for_grasp += p.approach_time;
                m.fire(Event::WristAligned)?;
            }
            FsmState::Grasp => {
                grasp_cycles += 1;
                d.grasp += p.close_time + p.settle_time;
                let t = target.take().expect("target planned in Detect");
                let grasped = grasp_attempt(world, &t, gp, &mut rng_grasp);
                let contact = match &grasped {
                    GraspOutcome::None => None,
                    g => match close_on_grasp(ctx.model, g.objects(), gp.close_depth) {
                        Ok(att) => {
                            let hp = HandPlant {
                                model: ctx.model.clone(),
                                attachment: att,
                            };
                            let touching = hp.sense().max_deformation() > perception.deform_threshold;
                            if touching {
                                Some(hp)
                            } else {
                                return_to_bowl(world, &hp.attachment.objects, &mut rng_bowl)?;
                                None
                            }
                        }
                        Err(Error::DroppedObject | Error::NoContact) => {
                            return_to_bowl(world, &held(g.objects()), &mut rng_bowl)?;
                            None
                        }
                        Err(e) => return Err(e),
                    },
                };
                match contact {
                    Some(hp) => {
                        plant = Some(hp);
                        m.fire(Event::ContactDetected)?;
                    }
                    None => {
                        retries += 1;
                        if retries > p.retry_cap {
                            break (Outcome::GraspFail, None);
                        }
                        m.fire(Event::NoContact)?;
                    }
                }
            }
            FsmState::Control => {
                let hp = plant.as_mut().expect("plant set in Grasp");
                let mut ctrl = Controller::new(
                    ctx.model.clone(),
                    ctx.controller.clone(),
                    stream(seed, &format!("control-{grasp_cycles}")),
                )?;
                let run = run_closed_loop(&mut ctrl, hp)?;
                control_steps += run.steps();
                final_theta = run.final_theta();
                d.control += run.steps() as f64 * ctx.controller.dt;
                traces.push(ControlTrace {
                    grasp_cycle: grasp_cycles,
                    outcome: run.outcome,
                    records: run.trace,
                });
                let event = match run.outcome {
                    LoopOutcome::Converged => Event::Converged,
                    LoopOutcome::Timeout => Event::Timeout,
                    LoopOutcome::LostContact => Event::LostContact,
                };
                if event != Event::Converged {
                    let hp = plant.take().expect("plant present");
                    return_to_bowl(world, &hp.attachment.objects, &mut rng_bowl)?;
                    retries += 1;
                    if retries > p.retry_cap {
                        break (Outcome::ControlTimeout, None);
                    }
                }
                m.fire(event)?;
            }
            FsmState::Classification => {
                d.classification += p.classify_time;
                let hp = plant.take().expect("plant set in Grasp");
                let objects = &hp.attachment.objects;
                let truth = if objects.len() >= 2 { TWO_OBJECTS } else { objects[0].class_id };
                let mut render = render_tactile(&hp.attachment, ctx.model, Side::Right);
                let samples = perceive_frame(
                    &mut render.frame,
                    perception,
                    ctx.scenario.dataset.label_eps,
                    &mut rng_classify,
                )?;
                let (class, confidence) = match samples.as_slice() {
                    [] => (PLANE, None),
                    [a, b, ..] if b.pixels as f64 >= p.two_cluster_ratio * a.pixels as f64 => (TWO_OBJECTS, None),
                    [a, ..] => {
                        let pred = ctx.classifier.predict(&a.tensor)?;
                        let conf = pred.confidence[pred.class_id as usize - 1];
                        (pred.class_id, Some(conf))
                    }
                };
                let to = m.fire(Event::Classified(class))?;
                let outcome = match class {
                    TWO_OBJECTS => Outcome::TwoObjects,
                    PLANE => Outcome::PlaneDetected,
                    c => Outcome::Sorted { class: c },
                };
                if to == FsmState::Initial {
                    return_to_bowl(world, objects, &mut rng_bowl)?;
                }
                break (outcome, Some((truth, class, confidence)));
            }
            FsmState::Initial | FsmState::Sorted => unreachable!("attempt ends before re-entering {:?}", m.state),
        }
    };

    let report = EpisodeReport {
        attempt_id,
        seed,
        outcome,
        final_state: m.state,
        true_class: classification.map(|c| c.0),
        predicted_class: classification.map(|c| c.1),
        confidence: classification.and_then(|c| c.2),
        retries,
        grasp_cycles,
        control_steps,
        final_theta,
        durations: d,
        transitions: m.transitions,
        trace: (!traces.is_empty()).then(|| trace_path(attempt_id)),
    };
    Ok(EpisodeResult { report, traces })
}

/// Seed of attempt `i` in a batch.
pub fn attempt_seed(base_seed: u64, i: u64) -> u64 {
    stream(base_seed, &format!("attempt-{i}")).random()
}

/// Run `episodes` independent attempts, each on a freshly spawned bowl, on
/// a pool of `workers` threads. Results come back in attempt order.
pub fn run_batch(ctx: &EpisodeContext<'_>, episodes: usize, base_seed: u64, workers: usize) -> Result<Vec<EpisodeResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| {
        (0..episodes as u64)
            .into_par_iter()
            .map(|i| {
                let seed = attempt_seed(base_seed, i);
                let mut world = spawn_bowl(ctx.scenario.bowl, &ctx.scenario.objects, seed)?;
                run_episode(&mut world, ctx, i, seed)
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub attempts: usize,
    /// Attempts whose grasp held through control and reached classification.
    pub successful_grasps: usize,
    pub sorted: usize,
    pub grasp_fail: usize,
    pub two_objects: usize,
    pub plane_detected: usize,
    pub control_timeout: usize,
    pub grasp_success_rate: f64,
    /// Classified attempts whose prediction matched what was held.
    pub correct_classifications: usize,
    pub confusion: ConfusionMatrix,
}

impl BatchSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EpisodeReport>) -> Self {
        let mut s = BatchSummary {
            attempts: 0,
            successful_grasps: 0,
            sorted: 0,
            grasp_fail: 0,
            two_objects: 0,
            plane_detected: 0,
            control_timeout: 0,
            grasp_success_rate: 0.0,
            correct_classifications: 0,
            confusion: ConfusionMatrix::new(),
        };
        for r in reports {
            s.attempts += 1;
            match r.outcome {
                Outcome::Sorted { .. } => s.sorted += 1,
                Outcome::GraspFail => s.grasp_fail += 1,
                Outcome::TwoObjects => s.two_objects += 1,
                Outcome::PlaneDetected => s.plane_detected += 1,
                Outcome::ControlTimeout => s.control_timeout += 1,
            }
            if let (Some(t), Some(pr)) = (r.true_class, r.predicted_class) {
                s.successful_grasps += 1;
                if (t as usize) <= NUM_CLASSES && (pr as usize) <= NUM_CLASSES {
                    s.confusion.record(t, pr);
                }
                if t == pr {
                    s.correct_classifications += 1;
                }
            }
        }
        if s.attempts > 0 {
            s.grasp_success_rate = s.successful_grasps as f64 / s.attempts as f64;
        }
        s
    }

    pub fn to_text(&self) -> String {
        format!(
            "attempts {}\nsuccessful grasps {}\ngrasp success rate {:.4}\nsorted {}\ngrasp_fail {}\ntwo_objects {}\nplane_detected {}\ncontrol_timeout {}\ncorrect classifications {}\n\n{}",
            self.attempts,
            self.successful_grasps,
            self.grasp_success_rate,
            self.sorted,
            self.grasp_fail,
            self.two_objects,
            self.plane_detected,
            self.control_timeout,
            self.correct_classifications,
            self.confusion.to_text()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_events() -> Vec<Event> {
        let mut v = vec![
            Event::Start,
            Event::InadequateDepth,
            Event::ValidTarget,
            Event::WristAligned,
            Event::NoContact,
            Event::ContactDetected,
            Event::Converged,
            Event::Timeout,
            Event::LostContact,
            Event::Reset,
        ];
        v.extend((0..=23).map(Event::Classified));
        v
    }

    fn expected(s: FsmState, e: Event) -> Option<FsmState> {
        use Event as E;
        use FsmState as S;
        Some(match (s, e) {
            (S::Initial, E::Start) => S::Detect,
            (S::Detect, E::InadequateDepth) => S::Detect,
            (S::Detect, E::ValidTarget) => S::ReadyForGrasp,
            (S::ReadyForGrasp, E::WristAligned) => S::Grasp,
            (S::Grasp, E::NoContact) => S::Detect,
            (S::Grasp, E::ContactDetected) => S::Control,
            (S::Control, E::Converged) => S::Classification,
            (S::Control, E::Timeout) => S::Detect,
            (S::Control, E::LostContact) => S::Detect,
            (S::Classification, E::Classified(21 | 22)) => S::Initial,
            (S::Classification, E::Classified(c)) if (1..=20).contains(&c) => S::Sorted,
            (S::Sorted, E::Reset) => S::Initial,
            _ => return None,
        })
    }

    #[test]
    fn exhaustive_table() {
        let mut defined = 0;
        for s in FsmState::ALL {
            for e in all_events() {
                match (transition(s, e), expected(s, e)) {
                    (Ok(got), Some(want)) => {
                        assert_eq!(got, want, "{s:?} {e:?}");
                        defined += 1;
                    }
                    (Err(Error::InvalidEvent { .. }), None) => {}
                    (got, want) => panic!("{s:?} {e:?}: got {got:?}, want {want:?}"),
                }
            }
        }
        // 11 listed edges, with Classified expanding to 22 labels.
        assert_eq!(defined, 10 + 22);
    }

    #[test]
    fn named_edges() {
        assert_eq!(transition(FsmState::Grasp, Event::ContactDetected).unwrap(), FsmState::Control);
        assert_eq!(
            transition(FsmState::Classification, Event::Classified(21)).unwrap(),
            FsmState::Initial
        );
        assert_eq!(
            transition(FsmState::Detect, Event::ValidTarget).unwrap(),
            FsmState::ReadyForGrasp
        );
    }

    #[test]
    fn every_state_is_reachable_from_initial() {
        let mut seen = vec![FsmState::Initial];
        let mut frontier = vec![FsmState::Initial];
        while let Some(s) = frontier.pop() {
            for e in all_events() {
                if let Ok(t) = transition(s, e) {
                    if !seen.contains(&t) {
                        seen.push(t);
                        frontier.push(t);
                    }
                }
            }
        }
        seen.sort();
        assert_eq!(seen, FsmState::ALL.to_vec());
    }

    #[test]
    fn params_validate() {
        assert!(EpisodeParams::default().validate().is_ok());
        let p = EpisodeParams {
            two_cluster_ratio: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = EpisodeParams {
            settle_time: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn summary_counts_outcomes() {
        let base = EpisodeReport {
            attempt_id: 0,
            seed: 0,
            outcome: Outcome::GraspFail,
            final_state: FsmState::Detect,
            true_class: None,
            predicted_class: None,
            confidence: None,
            retries: 4,
            grasp_cycles: 4,
            control_steps: 0,
            final_theta: None,
            durations: StateDurations::default(),
            transitions: vec![],
            trace: None,
        };
        let sorted = EpisodeReport {
            outcome: Outcome::Sorted { class: 3 },
            true_class: Some(3),
            predicted_class: Some(3),
            ..base.clone()
        };
        let two = EpisodeReport {
            outcome: Outcome::TwoObjects,
            true_class: Some(21),
            predicted_class: Some(21),
            ..base.clone()
        };
        let s = BatchSummary::from_reports([&base, &sorted, &two]);
        assert_eq!(s.attempts, 3);
        assert_eq!(s.successful_grasps, 2);
        assert_eq!(s.grasp_fail, 1);
        assert_eq!(s.confusion.get(21, 21), 1);
        assert!(s.to_text().contains("attempts 3"));
    }
}
