"""Online joint speaker-location clustering.

Each incoming segment carries a unit-norm embedding and a source angle. A
segment is scored against every active speaker by the product of two
calibrated probabilities: same-speaker given the embeddings, and
same-speaker given the angular distance. The decision is one of new
speaker, update, move (same voice from a far angle), or abstain when the
evidence is middling. Moves reset the speaker's location centroid so the
cluster follows the talker to the new seat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .angles import circular_distance, circular_mean
from .errors import DegenerateTrainingSet, UnknownSpeakerId

DEFAULT_EMBED_MARGIN = 0.4
DEFAULT_EMBED_TAU = 0.1
DEFAULT_THETA_NEW = 0.2
DEFAULT_THETA_CONF = 0.5
DEFAULT_T_D = math.radians(30.0)
MOVE_DOA_FLOOR = 0.5


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass
class SpeakerProfile:
    speaker_id: int
    embedding_centroid: np.ndarray
    location_centroid: float
    segment_count: int = 1
    location_weight: float = 1.0
    last_active_time: float = 0.0


@dataclass(frozen=True)
class SegmentSample:
    embedding: np.ndarray
    doa: float
    start_s: float
    end_s: float
    quality: float = 1.0


@dataclass(frozen=True)
class JointDecision:
    action: str
    speaker_id: int | None
    p_new: float
    p_update: float
    p_move: float


@dataclass(frozen=True)
class DoaIdentityModel:
    """P(same speaker | angular distance) = logistic(w * dist + b), w <= 0."""

    weight: float
    bias: float

    def __post_init__(self):
        if self.weight > 0:
            raise ValueError("weight must be non-positive")

    def prob_same(self, distance_rad: float) -> float:
        return _logistic(self.weight * distance_rad + self.bias)

    @classmethod
    def from_anchor(cls, p_at_zero: float = 0.95,
                    half_distance_rad: float = DEFAULT_T_D) -> "DoaIdentityModel":
        """Model hitting p_at_zero at distance 0 and 0.5 at half_distance_rad."""
        bias = math.log(p_at_zero / (1.0 - p_at_zero))
        return cls(weight=-bias / half_distance_rad, bias=bias)


@dataclass
class ClusteringConfig:
    theta_new: float = DEFAULT_THETA_NEW
    theta_conf: float = DEFAULT_THETA_CONF
    t_d: float = DEFAULT_T_D
    embed_margin: float = DEFAULT_EMBED_MARGIN
    embed_tau: float = DEFAULT_EMBED_TAU
    doa_model: DoaIdentityModel = field(default_factory=DoaIdentityModel.from_anchor)


def embedding_same_prob(u_a: np.ndarray, u_b: np.ndarray,
                        margin: float = DEFAULT_EMBED_MARGIN,
                        tau: float = DEFAULT_EMBED_TAU) -> float:
    """Cosine similarity mapped through a calibrated logistic."""
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    denom = float(np.linalg.norm(u_a) * np.linalg.norm(u_b))
    if denom < 1e-12:
        raise ValueError("embeddings must be non-zero")
    cosine = float(np.dot(u_a, u_b)) / denom
    return _logistic((cosine - margin) / tau)


def fit_doa_identity(pairs) -> DoaIdentityModel:
    """Maximum-likelihood logistic fit of P(same | distance); w projected <= 0.

    `pairs` is an iterable of (distance_rad, same_label). Newton iterations
    with a small ridge keep separable data finite.
    """
    data = [(float(d), bool(s)) for d, s in pairs]
    labels = {s for _, s in data}
    if len(labels) < 2:
        raise DegenerateTrainingSet("need both same and different pairs")
    x = np.array([d for d, _ in data])
    y = np.array([1.0 if s else 0.0 for _, s in data])
    design = np.column_stack([x, np.ones_like(x)])
    params = np.zeros(2)
    ridge = 1e-8 * np.eye(2)
    for _ in range(100):
        z = design @ params
        prob = 1.0 / (1.0 + np.exp(-np.clip(z, -35, 35)))
        grad = design.T @ (y - prob)
        s = np.maximum(prob * (1.0 - prob), 1e-9)
        hess = design.T @ (design * s[:, None]) + ridge
        step = np.linalg.solve(hess, grad)
        params = params + step
        if np.max(np.abs(step)) < 1e-10:
            break
    return DoaIdentityModel(weight=min(params[0], 0.0), bias=params[1])


def joint_decision(
    profiles: list[SpeakerProfile],
    sample: SegmentSample,
    model: DoaIdentityModel | None = None,
    t_d: float = DEFAULT_T_D,
    theta_new: float = DEFAULT_THETA_NEW,
    theta_conf: float = DEFAULT_THETA_CONF,
    embed_margin: float = DEFAULT_EMBED_MARGIN,
    embed_tau: float = DEFAULT_EMBED_TAU,
) -> JointDecision:
    """Score the sample against all speakers and pick an action.

    Candidates beyond t_d keep their embedding evidence with the location
    factor floored (movement voids the location prior); for those the final
    confidence gate likewise tests the embedding probability alone.
    """
    if sample.quality <= 0.0:
        raise ValueError("sample quality must be positive")
    model = model or DoaIdentityModel.from_anchor()
    if not profiles:
        return JointDecision("new_speaker", None, 1.0, 0.0, 0.0)

    scores, dists, emb_probs = [], [], []
    for prof in profiles:
        emb_p = embedding_same_prob(sample.embedding, prof.embedding_centroid,
                                    embed_margin, embed_tau)
        dist = circular_distance(sample.doa, prof.location_centroid)
        doa_p = model.prob_same(dist)
        if dist >= t_d:
            doa_p = max(doa_p, MOVE_DOA_FLOOR)
        scores.append(emb_p * doa_p)
        dists.append(dist)
        emb_probs.append(emb_p)

    best_pos = 0
    for i in range(1, len(profiles)):
        better = scores[i] > scores[best_pos]
        tie_lower_id = (
            scores[i] == scores[best_pos]
            and profiles[i].speaker_id < profiles[best_pos].speaker_id
        )
        if better or tie_lower_id:
            best_pos = i
    best_score = scores[best_pos]
    best_id = profiles[best_pos].speaker_id

    new_score = max(0.0, 1.0 - best_score)
    norm = new_score + sum(scores)
    p_new = new_score / norm
    p_update = sum(s for s, d in zip(scores, dists) if d < t_d) / norm
    p_move = sum(s for s, d in zip(scores, dists) if d >= t_d) / norm

    if best_score < theta_new:
        return JointDecision("new_speaker", None, p_new, p_update, p_move)
    moved = dists[best_pos] >= t_d
    confidence = emb_probs[best_pos] if moved else best_score
    if confidence < theta_conf:
        return JointDecision("abstain", best_id, p_new, p_update, p_move)
    action = "move" if moved else "update"
    return JointDecision(action, best_id, p_new, p_update, p_move)


def apply_decision(
    profiles: list[SpeakerProfile],
    sample: SegmentSample,
    decision: JointDecision,
) -> list[SpeakerProfile]:
    """Mutate the state per the decision and return it."""
    if decision.action == "abstain":
        raise ValueError("abstain decisions make no state update")
    if decision.action == "new_speaker":
        next_id = max((p.speaker_id for p in profiles), default=-1) + 1
        profiles.append(
            SpeakerProfile(
                speaker_id=next_id,
                embedding_centroid=np.asarray(sample.embedding, dtype=float).copy(),
                location_centroid=sample.doa,
                segment_count=1,
                location_weight=1.0,
                last_active_time=sample.end_s,
            )
        )
        return profiles

    prof = next((p for p in profiles if p.speaker_id == decision.speaker_id), None)
    if prof is None:
        raise UnknownSpeakerId(f"speaker {decision.speaker_id}")
    n = prof.segment_count
    mean = (n * prof.embedding_centroid + np.asarray(sample.embedding, dtype=float)) / (n + 1)
    norm = float(np.linalg.norm(mean))
    if norm > 1e-12:
        prof.embedding_centroid = mean / norm
    prof.segment_count = n + 1
    if decision.action == "move":
        prof.location_centroid = sample.doa
        prof.location_weight = 1.0
    else:
        prof.location_centroid = circular_mean(
            np.array([prof.location_centroid, sample.doa]),
            np.array([prof.location_weight, 1.0]),
        )
        prof.location_weight += 1.0
    prof.last_active_time = sample.end_s
    return profiles


@dataclass(frozen=True)
class LabeledSegment:
    sample: SegmentSample
    speaker_id: int
    tentative: bool
    decision: JointDecision


def run_online_diarization(
    samples,
    config: ClusteringConfig | None = None,
    profiles: list[SpeakerProfile] | None = None,
) -> list[LabeledSegment]:
    """Label a time-ordered segment stream, evolving the state as it goes.

    Abstained segments keep the most-likely id but are flagged tentative and
    leave the state untouched.
    """
    config = config or ClusteringConfig()
    state = profiles if profiles is not None else []
    labeled: list[LabeledSegment] = []
    for sample in samples:
        decision = joint_decision(
            state, sample, config.doa_model, config.t_d,
            config.theta_new, config.theta_conf,
            config.embed_margin, config.embed_tau,
        )
        if decision.action == "abstain":
            labeled.append(LabeledSegment(sample, decision.speaker_id, True, decision))
            continue
        apply_decision(state, sample, decision)
        if decision.action == "new_speaker":
            speaker_id = state[-1].speaker_id
            decision = replace(decision, speaker_id=speaker_id)
        else:
            speaker_id = decision.speaker_id
        labeled.append(LabeledSegment(sample, speaker_id, False, decision))
    return labeled
