use rand::Rng as _;

use super::{Controller, Decision, StepContext};
use crate::error::Result;
use crate::extract::{circular_l1_value, saliency};
use crate::policy::{action_probabilities, policy_inputs, select_action, PolicyNet, SelectMode};
use crate::rng::Rng;
use crate::tensor::Tape;
use crate::world::{expert_action_with, forward_blocked, Action, AgentPose, TURN_ANGLE};

/// Stops immediately.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysStop;

impl Controller for AlwaysStop {
    fn act(&mut self, _ctx: &StepContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        Ok(Decision::act(Action::Stop))
    }
}

/// Follows the shortest path to the goal.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertController;

impl Controller for ExpertController {
    fn act(&mut self, ctx: &StepContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        let goal = ctx.require_goal()?;
        Ok(Decision::act(expert_action_with(ctx.scene, goal.distances, &ctx.pose, goal.episode.target)?))
    }
}

/// Uniform over forward and the two turns.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomWalk;

impl Controller for RandomWalk {
    fn act(&mut self, _ctx: &StepContext<'_>, rng: &mut Rng) -> Result<Decision> {
        let moves = [Action::Forward, Action::TurnLeft, Action::TurnRight];
        Ok(Decision::act(moves[rng.gen_range(0..3)]))
    }
}

/// Heads for whichever of the current and the two turned headings renders
/// the highest mean uncertainty.
#[derive(Debug, Clone, Copy, Default)]
pub struct UncertaintyGreedy;

impl UncertaintyGreedy {
    /// Mean uncertainty for the current, left-turned and right-turned
    /// headings, in that order.
    pub fn scores(ctx: &StepContext<'_>) -> Result<[f64; 3]> {
        let field = ctx.require_field()?;
        let mut out = [0.0; 3];
        for (slot, offset) in out.iter_mut().zip([0.0, TURN_ANGLE, -TURN_ANGLE]) {
            let pose = AgentPose::new(ctx.pose.position.x, ctx.pose.position.y, ctx.pose.theta + offset);
            let maps = field.render(&pose, ctx.camera)?;
            *slot = maps.uncertainty.iter().sum::<f64>() / maps.uncertainty.len() as f64;
        }
        Ok(out)
    }

    pub fn choose(scores: [f64; 3], blocked: bool) -> Action {
        let [here, left, right] = scores;
        if here >= left && here >= right {
            if blocked {
                Action::TurnLeft
            } else {
                Action::Forward
            }
        } else if left >= right {
            Action::TurnLeft
        } else {
            Action::TurnRight
        }
    }
}

impl Controller for UncertaintyGreedy {
    fn needs_field(&self) -> bool {
        true
    }

    fn act(&mut self, ctx: &StepContext<'_>, _rng: &mut Rng) -> Result<Decision> {
        let scores = Self::scores(ctx)?;
        Ok(Decision::act(Self::choose(scores, forward_blocked(ctx.scene, &ctx.pose))))
    }
}

/// Runs a trained policy with frozen parameters.
#[derive(Debug, Clone, Copy)]
pub struct PolicyController<'a> {
    pub net: &'a PolicyNet,
    pub mode: SelectMode,
    /// Also return the uncertainty map and its saliency each step.
    pub capture: bool,
}

impl<'a> PolicyController<'a> {
    pub fn new(net: &'a PolicyNet, mode: SelectMode) -> Self {
        PolicyController { net, mode, capture: false }
    }
}

impl Controller for PolicyController<'_> {
    fn needs_field(&self) -> bool {
        true
    }

    fn act(&mut self, ctx: &StepContext<'_>, rng: &mut Rng) -> Result<Decision> {
        let goal = ctx.require_goal()?;
        let maps = ctx.render_maps()?;
        let mut tape = Tape::new();
        let bind = self.net.params.bind_frozen(&mut tape);
        let inputs = policy_inputs(&mut tape, &maps, ctx.observation, &goal.episode.target_image, self.capture)?;
        let out = self.net.forward(&mut tape, &bind, &inputs)?;
        let probs = action_probabilities(&tape, &out);
        let action = select_action(&probs, self.mode, rng);
        let mut decision = Decision {
            action: Some(action),
            angle_error: Some(circular_l1_value(tape.item(out.angle), goal.bearing(&ctx.pose))),
            probs: Some(probs),
            ..Decision::default()
        };
        if self.capture {
            let mut pick = vec![0.0; Action::COUNT];
            pick[action.index()] = 1.0;
            let sel = tape.constant(&[1, Action::COUNT], pick)?;
            let chosen = tape.mul(out.log_probs, sel)?;
            let score = tape.sum(chosen)?;
            let grads = tape.backward(score)?;
            decision.saliency = Some(saliency(grads.get(inputs.uncertainty), maps.width()));
            decision.uncertainty = Some(maps.uncertainty);
        }
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_choice_rules() {
        assert_eq!(UncertaintyGreedy::choose([1.0, 1.0, 1.0], false), Action::Forward);
        assert_eq!(UncertaintyGreedy::choose([1.0, 1.0, 1.0], true), Action::TurnLeft);
        assert_eq!(UncertaintyGreedy::choose([1.0, 2.0, 1.5], false), Action::TurnLeft);
        assert_eq!(UncertaintyGreedy::choose([1.0, 1.5, 2.0], false), Action::TurnRight);
    }
}
