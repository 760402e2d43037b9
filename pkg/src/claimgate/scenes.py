"""Synthetic desk-scale scenes plus oracle and fallible test backends.

Scenes are flat-color rectangles on a white canvas. Each category has a
fixed palette color, so a trivial color detector can reproduce the oracle
grounder's output from the rendered image alone. Gold answers reuse the
same geometry helpers as evidence derivation, so the two cannot disagree.

All noise (grounder jitter, judge flips) is derived from stable hashes,
never from shared RNG state, so concurrent runs stay deterministic.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from PIL import Image, ImageDraw

from .backends import Backends, ChatRequest, ChatResponse, SegmentRequest
from .evidence import claimed_count_from_text
from .geometry import Box, box_center, box_to_mask, relation, rle_encode, RELATION_SWAP
from .model import BinaryAnswer, ClaimType, normalize_target

CANVAS = (320, 240)

# Closed vocabulary: category -> its single palette color term.
CATEGORY_COLORS = {
    "dog": "brown",
    "cat": "orange",
    "car": "red",
    "bus": "yellow",
    "tree": "green",
    "chair": "blue",
    "person": "pink",
    "bottle": "purple",
    "laptop": "gray",
    "ball": "black",
}

COLOR_RGB = {
    "brown": (139, 69, 19),
    "orange": (255, 140, 0),
    "red": (220, 20, 60),
    "yellow": (255, 215, 0),
    "green": (34, 139, 34),
    "blue": (30, 80, 220),
    "pink": (255, 182, 193),
    "purple": (128, 0, 180),
    "gray": (128, 128, 128),
    "black": (20, 20, 20),
}

_PLURALS = {"person": "people", "bus": "buses"}

# Plausible co-occurrence partners for adversarial absent-object questions.
_CO_OCCURRENCE = {
    "dog": "cat",
    "cat": "dog",
    "car": "bus",
    "bus": "car",
    "tree": "person",
    "person": "tree",
    "chair": "laptop",
    "laptop": "chair",
    "bottle": "ball",
    "ball": "bottle",
}

RELATION_PHRASES = ("left of", "right of", "above", "below")


def plural(category: str) -> str:
    return _PLURALS.get(category, category + "s")


def stable_uniform(*parts) -> float:
    """Deterministic pseudo-uniform in [0,1) from the given parts."""
    blob = ":".join(str(p) for p in parts).encode()
    digest = hashlib.sha256(blob).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass(frozen=True)
class SceneObject:
    category: str
    color: str
    bbox: Box
    instance_id: int

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "color": self.color,
            "bbox": list(self.bbox),
            "instance_id": self.instance_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneObject":
        return cls(d["category"], d["color"], tuple(d["bbox"]), d["instance_id"])


@dataclass(frozen=True)
class SceneQuestion:
    question: str
    ctype: ClaimType
    gold: BinaryAnswer
    targets: tuple[str, ...]
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "ctype": self.ctype.value,
            "gold": self.gold.value,
            "targets": list(self.targets),
            "payload": dict(self.payload),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneQuestion":
        return cls(
            d["question"],
            ClaimType(d["ctype"]),
            BinaryAnswer(d["gold"]),
            tuple(d["targets"]),
            dict(d.get("payload", {})),
        )


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    canvas: tuple[int, int]
    objects: tuple[SceneObject, ...]
    questions: tuple[SceneQuestion, ...]

    def objects_of(self, category: str) -> list[SceneObject]:
        """Instances of a category in raster order (y0, then x0)."""
        objs = [o for o in self.objects if o.category == category]
        objs.sort(key=lambda o: (o.bbox[1], o.bbox[0]))
        return objs

    def present_categories(self) -> list[str]:
        seen: list[str] = []
        for obj in self.objects:
            if obj.category not in seen:
                seen.append(obj.category)
        return seen

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "canvas": list(self.canvas),
            "objects": [o.to_dict() for o in self.objects],
            "questions": [q.to_dict() for q in self.questions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            seed=d["seed"],
            canvas=tuple(d["canvas"]),
            objects=tuple(SceneObject.from_dict(o) for o in d["objects"]),
            questions=tuple(SceneQuestion.from_dict(q) for q in d["questions"]),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _overlaps(a: Box, b: Box, gap: int = 4) -> bool:
    return not (
        a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1]
    )


def _place_objects(rng: random.Random, categories: Sequence[str]) -> list[SceneObject]:
    width, height = CANVAS
    objects: list[SceneObject] = []
    instance_id = 0
    for category in categories:
        count = rng.randint(1, 3)
        for _ in range(count):
            for _attempt in range(80):
                w = rng.randint(24, 60)
                h = rng.randint(24, 60)
                x0 = rng.randint(6, width - w - 6)
                y0 = rng.randint(6, height - h - 6)
                box = (x0, y0, x0 + w, y0 + h)
                if not any(_overlaps(box, o.bbox) for o in objects):
                    objects.append(
                        SceneObject(category, CATEGORY_COLORS[category], box, instance_id)
                    )
                    instance_id += 1
                    break
    return objects


def _true_relation(spec_objects: list[SceneObject], a: str, b: str) -> str:
    first_a = sorted(
        (o for o in spec_objects if o.category == a), key=lambda o: (o.bbox[1], o.bbox[0])
    )[0]
    first_b = sorted(
        (o for o in spec_objects if o.category == b), key=lambda o: (o.bbox[1], o.bbox[0])
    )[0]
    return relation(box_center(first_a.bbox), box_center(first_b.bbox))


def generate_scene(seed: int, difficulty: str = "normal") -> SceneSpec:
    """Seeded scene with one question per claim type."""
    if difficulty not in ("normal", "adversarial"):
        raise ValueError(f"unknown difficulty {difficulty!r}")
    rng = random.Random(seed)
    vocabulary = sorted(CATEGORY_COLORS)
    present = rng.sample(vocabulary, 3)
    objects = _place_objects(rng, present)
    present = [c for c in present if any(o.category == c for o in objects)]
    absent = [c for c in vocabulary if c not in present]
    questions: list[SceneQuestion] = []

    # Existence: present or (plausibly) absent category.
    if rng.random() < 0.5:
        cat = rng.choice(present)
        gold = BinaryAnswer.YES
    else:
        cat = None
        if difficulty == "adversarial":
            partners = [_CO_OCCURRENCE[c] for c in present if _CO_OCCURRENCE[c] in absent]
            if partners:
                cat = rng.choice(sorted(set(partners)))
        if cat is None:
            cat = rng.choice(absent)
        gold = BinaryAnswer.NO
    questions.append(
        SceneQuestion(
            question=f"Is there a {cat} in the image?",
            ctype=ClaimType.EXISTENCE,
            gold=gold,
            targets=(cat,),
        )
    )

    # Count: true count or off by one.
    cat = rng.choice(present)
    true_count = len([o for o in objects if o.category == cat])
    if rng.random() < 0.5:
        asked = true_count
        gold = BinaryAnswer.YES
    else:
        asked = true_count + 1 if (true_count == 1 or rng.random() < 0.5) else true_count - 1
        gold = BinaryAnswer.NO
    questions.append(
        SceneQuestion(
            question=f"Are there exactly {asked} {plural(cat)} in the image?",
            ctype=ClaimType.COUNT,
            gold=gold,
            targets=(cat,),
            payload={"count": asked},
        )
    )

    # Color: true palette color or a wrong one.
    cat = rng.choice(present)
    true_color = CATEGORY_COLORS[cat]
    if rng.random() < 0.5:
        asked_color = true_color
        gold = BinaryAnswer.YES
    else:
        asked_color = rng.choice(sorted(set(CATEGORY_COLORS.values()) - {true_color}))
        gold = BinaryAnswer.NO
    questions.append(
        SceneQuestion(
            question=f"Is the {cat} {asked_color}?",
            ctype=ClaimType.COLOR,
            gold=gold,
            targets=(cat,),
            payload={"color": asked_color},
        )
    )

    # Position: relation between the raster-first instances of two categories.
    if len(present) >= 2:
        a, b = rng.sample(present, 2)
        truth = _true_relation(objects, a, b)
        if truth not in RELATION_PHRASES:  # coincident cannot happen for disjoint boxes
            truth = "left of"
        if rng.random() < 0.5:
            asked_rel = truth
            gold = BinaryAnswer.YES
        else:
            asked_rel = RELATION_SWAP[truth]
            gold = BinaryAnswer.NO
        questions.append(
            SceneQuestion(
                question=f"Is the {a} {asked_rel} the {b}?",
                ctype=ClaimType.POSITION,
                gold=gold,
                targets=(a, b),
                payload={"relation": asked_rel},
            )
        )

    return SceneSpec(
        seed=seed, canvas=CANVAS, objects=tuple(objects), questions=tuple(questions)
    )


def render_scene(spec: SceneSpec) -> Image.Image:
    img = Image.new("RGB", spec.canvas, (255, 255, 255))
    draw = ImageDraw.Draw(img)
    for obj in spec.objects:
        x0, y0, x1, y1 = obj.bbox
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), fill=COLOR_RGB[obj.color])
    return img


# ---------------------------------------------------------------------------
# Oracle truth helpers shared by the test backends.


def _claim_count(text: str) -> Optional[int]:
    return claimed_count_from_text(text)


def _claim_color(text: str) -> Optional[str]:
    for token in re.findall(r"[a-zA-Z]+", text.lower()):
        if token in COLOR_RGB:
            return token
    return None


def _claim_relation(text: str) -> Optional[str]:
    lowered = text.lower()
    for phrase in RELATION_PHRASES:
        if phrase in lowered:
            return phrase
    return None


def claim_truth(spec: SceneSpec, claim: dict) -> bool:
    """Does the scene make this claim true? Shares geometry with evidence."""
    ctype = ClaimType(claim["type"])
    targets = [normalize_target(t) for t in claim["targets"]]
    text = claim["text"]
    if ctype is ClaimType.EXISTENCE:
        return bool(spec.objects_of(targets[0]))
    if ctype is ClaimType.COUNT:
        asked = _claim_count(text)
        return asked is not None and asked == len(spec.objects_of(targets[0]))
    if ctype is ClaimType.COLOR:
        asked = _claim_color(text)
        objs = spec.objects_of(targets[0])
        return bool(objs) and asked == objs[0].color
    asked_rel = _claim_relation(text)
    if asked_rel is None or len(targets) != 2:
        return False
    subj = spec.objects_of(targets[0])
    anchor = spec.objects_of(targets[1])
    if not subj or not anchor:
        return False
    return asked_rel == relation(box_center(subj[0].bbox), box_center(anchor[0].bbox))


_QUESTION_RE = re.compile(r'Question: "(.+?)"')


def _find_question(spec: SceneSpec, request_text: str) -> SceneQuestion:
    match = _QUESTION_RE.search(request_text)
    if not match:
        raise AssertionError("oracle backend got a prompt without a Question line")
    text = match.group(1)
    for q in spec.questions:
        if q.question == text:
            return q
    raise AssertionError(f"oracle backend got unknown question {text!r}")


def _claim_text_for(meta: SceneQuestion) -> tuple[str, tuple[str, ...]]:
    if meta.ctype is ClaimType.EXISTENCE:
        return f"A {meta.targets[0]} appears in the image.", meta.targets
    if meta.ctype is ClaimType.COUNT:
        return (
            f"The image contains {meta.payload['count']} {meta.targets[0]}.",
            meta.targets,
        )
    if meta.ctype is ClaimType.COLOR:
        return f"The {meta.targets[0]} is {meta.payload['color']}.", meta.targets
    return (
        f"The {meta.targets[0]} is {meta.payload['relation']} the {meta.targets[1]}.",
        meta.targets,
    )


def claim_matches_question(meta: SceneQuestion, claim: dict) -> bool:
    """True when the claim restates exactly the question's proposition."""
    if ClaimType(claim["type"]) is not meta.ctype:
        return False
    targets = tuple(normalize_target(t) for t in claim["targets"])
    if targets != tuple(normalize_target(t) for t in meta.targets):
        return False
    text = claim["text"]
    if meta.ctype is ClaimType.COUNT:
        return _claim_count(text) == meta.payload["count"]
    if meta.ctype is ClaimType.COLOR:
        return _claim_color(text) == meta.payload["color"]
    if meta.ctype is ClaimType.POSITION:
        return _claim_relation(text) == meta.payload["relation"]
    return True


class OracleInitializer:
    """Answers from scene truth (optionally scripted wrong) and emits the
    claim restating the question's proposition.
    """

    def __init__(self, spec: SceneSpec, wrong: bool = False):
        self.spec = spec
        self.wrong = wrong

    def describe(self) -> str:
        return f"oracle-initializer(wrong={self.wrong})"

    def chat(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        meta = _find_question(self.spec, text)
        truthful = meta.gold
        answer = truthful.flipped() if self.wrong else truthful

        if "yes|no|unclear" in text:  # yes-guard template
            guard = {
                "answer": "yes" if truthful is BinaryAnswer.YES else "no",
                "confidence": "high",
                "reason": "Scene ground truth.",
            }
            return ChatResponse(text=json.dumps(guard))
        if 'exactly "Yes" or "No"' in text and "verifiable_claims" not in text:
            return ChatResponse(text=answer.value)

        claim_text, targets = _claim_text_for(meta)
        payload = {
            "answer": answer.value,
            "verifiable_claims": [
                {
                    "id": "c1",
                    "type": meta.ctype.value,
                    "text": claim_text,
                    "targets": list(targets),
                }
            ],
        }
        return ChatResponse(text=json.dumps(payload))


_CLAIMS_LINE_RE = re.compile(r"^Claims: (.+)$", re.MULTILINE)
_LEGAL_IDS_RE = re.compile(r"^Legal EvidenceIDs: (.+)$", re.MULTILINE)


def _legal_ids(text: str) -> list[str]:
    match = _LEGAL_IDS_RE.search(text)
    if not match or match.group(1).strip() == "(none)":
        return []
    return [part.strip() for part in match.group(1).split(",") if part.strip()]


def _pick_citations(legal: Sequence[str], preferred_bases: Sequence[str]) -> list[str]:
    chosen: list[str] = []
    for base in preferred_bases:
        for eid in legal:
            if eid == base or eid.startswith(base + "_r"):
                chosen.append(eid)
                break
        if len(chosen) == 2:
            break
    if not chosen and legal:
        chosen.append(legal[0])
    return chosen


class OracleJudge:
    """Schema-perfect judge. Modes: truthful, always_supported,
    always_insufficient. flip_p makes the truthful mode fallible: flipped
    verdicts draw their confidence from flip_conf (hash-derived).
    """

    def __init__(
        self,
        spec: SceneSpec,
        mode: str = "truthful",
        flip_p: float = 0.0,
        flip_conf: tuple[float, float] = (0.5, 0.8),
        seed: int = 0,
    ):
        if mode not in ("truthful", "always_supported", "always_insufficient"):
            raise ValueError(f"unknown judge mode {mode!r}")
        self.spec = spec
        self.mode = mode
        self.flip_p = flip_p
        self.flip_conf = flip_conf
        self.seed = seed

    def describe(self) -> str:
        return f"oracle-judge(mode={self.mode}, flip_p={self.flip_p})"

    def _preferred_bases(self, claim: dict) -> list[str]:
        ctype = ClaimType(claim["type"])
        tkeys = [normalize_target(t) for t in claim["targets"]]
        if ctype is ClaimType.EXISTENCE:
            return [f"e_exist_{tkeys[0]}", f"e_seg_{tkeys[0]}"]
        if ctype is ClaimType.COUNT:
            return [f"e_count_{tkeys[0]}", f"e_countcmp_{tkeys[0]}", f"e_seg_{tkeys[0]}"]
        if ctype is ClaimType.COLOR:
            return [f"e_color_{tkeys[0]}", f"e_crop_{tkeys[0]}", f"e_seg_{tkeys[0]}"]
        bases = [f"e_posrel_{claim['id']}"]
        bases.extend(f"e_pos_{t}" for t in tkeys)
        return bases

    def chat(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        match = _CLAIMS_LINE_RE.search(text)
        if not match:
            raise AssertionError("judge got a prompt without a Claims line")
        claims = json.loads(match.group(1))
        legal = _legal_ids(text)
        checked = []
        for claim in claims:
            citations = _pick_citations(legal, self._preferred_bases(claim))
            if self.mode == "always_insufficient":
                checked.append(
                    {
                        "claim_id": claim["id"],
                        "status": "insufficient",
                        "confidence": 0.3,
                        "why": "forced insufficient",
                        "citations": [],
                    }
                )
                continue
            if self.mode == "always_supported":
                status, confidence = "supported", 0.99
            else:
                truth = claim_truth(self.spec, claim)
                status = "supported" if truth else "contradicted"
                confidence = 0.99
                flip_roll = stable_uniform(self.seed, "flip", claim["id"], claim["text"])
                if self.flip_p > 0 and flip_roll < self.flip_p:
                    status = "contradicted" if status == "supported" else "supported"
                    lo, hi = self.flip_conf
                    conf_roll = stable_uniform(self.seed, "conf", claim["id"], claim["text"])
                    confidence = lo + (hi - lo) * conf_roll
            checked.append(
                {
                    "claim_id": claim["id"],
                    "status": status,
                    "confidence": round(confidence, 4),
                    "why": "scene ground truth" if self.mode == "truthful" else self.mode,
                    "citations": citations,
                }
            )
        statuses = [c["status"] for c in checked]
        if "contradicted" in statuses:
            verdict = "contradicted"
        elif all(s == "supported" for s in statuses):
            verdict = "supported"
        else:
            verdict = "insufficient"
        return ChatResponse(text=json.dumps({"verdict": verdict, "checked": checked}))


_PREV_ANSWER_RE = re.compile(r'^PreviousAnswer: "(Yes|No)"$', re.MULTILINE)
_HISTORY_RE = re.compile(r"^RoundHistory: (.+)$", re.MULTILINE)
_CONTEXT_RE = re.compile(r"^CurrentRoundContext: (.+)$", re.MULTILINE)


class OracleRefiner:
    """Verdict-driven refiner. It only lets a verdict steer the answer when
    the verified claim restates the question; otherwise it keeps the previous
    answer. On insufficient verdicts it rotates the claim to a fresh scene
    category so the next round gathers genuinely new evidence.
    """

    def __init__(self, spec: SceneSpec):
        self.spec = spec

    def describe(self) -> str:
        return "oracle-refiner"

    def _rotate_claim(self, meta: SceneQuestion, index: int) -> dict:
        pool = [c for c in sorted(CATEGORY_COLORS) if c not in meta.targets]
        cat = pool[index % len(pool)]
        if meta.ctype is ClaimType.EXISTENCE:
            text, targets = f"A {cat} appears in the image.", [cat]
        elif meta.ctype is ClaimType.COUNT:
            text, targets = f"The image contains 1 {cat}.", [cat]
        elif meta.ctype is ClaimType.COLOR:
            text, targets = f"The {cat} is {CATEGORY_COLORS[cat]}.", [cat]
        else:
            other = pool[(index + 1) % len(pool)]
            text, targets = f"The {cat} is left of the {other}.", [cat, other]
        return {
            "id": "c1",
            "type": meta.ctype.value,
            "text": text,
            "targets": targets,
            "priority": 1,
        }

    def chat(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        meta = _find_question(self.spec, text)
        prev_match = _PREV_ANSWER_RE.search(text)
        history_match = _HISTORY_RE.search(text)
        context_match = _CONTEXT_RE.search(text)
        if not (prev_match and history_match and context_match):
            raise AssertionError("refiner got a prompt missing required lines")
        prev = BinaryAnswer(prev_match.group(1))
        history = json.loads(history_match.group(1))
        context = json.loads(context_match.group(1))
        verdict = context["verify"]["verdict"]
        claims = context["claims"]
        current = claims[0] if claims else None

        answer = prev
        if current is not None and claim_matches_question(meta, current):
            if verdict == "supported":
                answer = BinaryAnswer.YES
            elif verdict == "contradicted":
                answer = BinaryAnswer.NO

        if verdict == "insufficient" or current is None:
            new_claim = self._rotate_claim(meta, len(history))
        else:
            new_claim = dict(current)
            new_claim.setdefault("priority", 1)
        payload = {"new_claims": [new_claim], "Answer": answer.value}
        return ChatResponse(text=json.dumps(payload))


_COLOR_PROMPT_RE = re.compile(r"main color\s+of the '([^']+)'")
_COUNT_PROMPT_RE = re.compile(r"instances of '([^']+)'")


class OracleObserver:
    """Answers the fixed color/count observation prompts from scene truth."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec

    def describe(self) -> str:
        return "oracle-observer"

    def chat(self, request: ChatRequest) -> ChatResponse:
        text = request.text()
        color_match = _COLOR_PROMPT_RE.search(text)
        if color_match:
            objs = self.spec.objects_of(normalize_target(color_match.group(1)))
            term = objs[0].color if objs else "unknown"
            return ChatResponse(text=term)
        count_match = _COUNT_PROMPT_RE.search(text)
        if count_match:
            n = len(self.spec.objects_of(normalize_target(count_match.group(1))))
            return ChatResponse(text=str(n))
        raise AssertionError(f"observer got an unknown prompt: {text[:80]!r}")


class OracleGrounder:
    """Exact segmentation from scene truth with optional hash-seeded noise."""

    def __init__(
        self,
        spec: SceneSpec,
        miss_rate: float = 0.0,
        hallucinate_rate: float = 0.0,
        score_jitter: float = 0.0,
        seed: int = 0,
    ):
        self.spec = spec
        self.miss_rate = miss_rate
        self.hallucinate_rate = hallucinate_rate
        self.score_jitter = score_jitter
        self.seed = seed

    def describe(self) -> str:
        return (
            f"oracle-grounder(miss={self.miss_rate}, "
            f"hallucinate={self.hallucinate_rate}, jitter={self.score_jitter})"
        )

    def _score(self, concept: str, index: int) -> float:
        base = 0.99
        if self.score_jitter:
            base -= self.score_jitter * stable_uniform(self.seed, "jitter", concept, index)
        return round(max(0.0, min(1.0, base)), 4)

    def segment(self, request: SegmentRequest) -> dict:
        width, height = self.spec.canvas
        category = normalize_target(request.concept) if request.concept.strip() else ""
        instances = []
        for i, obj in enumerate(self.spec.objects_of(category)):
            if self.miss_rate and stable_uniform(
                self.seed, "miss", category, obj.instance_id
            ) < self.miss_rate:
                continue
            score = self._score(category, i)
            instances.append((score, obj.bbox))
        if self.hallucinate_rate and stable_uniform(
            self.seed, "hallucinate", category
        ) < self.hallucinate_rate:
            u1 = stable_uniform(self.seed, "hx", category)
            u2 = stable_uniform(self.seed, "hy", category)
            w, h = 22, 22
            x0 = int(u1 * (width - w - 2)) + 1
            y0 = int(u2 * (height - h - 2)) + 1
            instances.append((self._score(category, 99), (x0, y0, x0 + w, y0 + h)))
        instances = [
            (score, box) for score, box in instances if score >= request.min_score
        ]
        instances.sort(key=lambda pair: -pair[0])
        instances = instances[: request.max_instances]
        return {
            "instances": [
                {
                    "score": score,
                    "bbox": list(box),
                    "mask": {"format": "rle", "data": rle_encode(box_to_mask(box, width, height))},
                }
                for score, box in instances
            ],
            "model": "oracle-grounder",
        }


def make_scene_backends(
    spec: SceneSpec,
    init_wrong: bool = False,
    judge_mode: str = "truthful",
    judge_flip_p: float = 0.0,
    judge_flip_conf: tuple[float, float] = (0.5, 0.8),
    grounder_miss: float = 0.0,
    grounder_hallucinate: float = 0.0,
    grounder_jitter: float = 0.0,
    seed: int = 0,
    with_observer: bool = True,
) -> Backends:
    return Backends(
        initializer=OracleInitializer(spec, wrong=init_wrong),
        judge=OracleJudge(
            spec, mode=judge_mode, flip_p=judge_flip_p, flip_conf=judge_flip_conf, seed=seed
        ),
        refiner=OracleRefiner(spec),
        color_observer=OracleObserver(spec) if with_observer else None,
        grounder=OracleGrounder(
            spec,
            miss_rate=grounder_miss,
            hallucinate_rate=grounder_hallucinate,
            score_jitter=grounder_jitter,
            seed=seed,
        ),
    )


def make_dataset(
    num_scenes: int,
    seed0: int = 0,
    difficulty: str = "normal",
    questions: str = "cycle",
):
    """Samples plus their scene specs. questions="cycle" takes one question
    per scene (rotating through claim types); "all" takes every question.
    """
    from .model import Sample

    out = []
    order = [ClaimType.EXISTENCE, ClaimType.COUNT, ClaimType.COLOR, ClaimType.POSITION]
    for i in range(num_scenes):
        seed = seed0 + i
        spec = generate_scene(seed, difficulty)
        image = render_scene(spec)
        if questions == "cycle":
            wanted = order[i % len(order)]
            metas = [q for q in spec.questions if q.ctype is wanted] or [spec.questions[0]]
        elif questions == "all":
            metas = list(spec.questions)
        else:
            raise ValueError(f"unknown questions mode {questions!r}")
        for meta in metas:
            sample = Sample(
                sample_id=f"s{seed}_{meta.ctype.value}",
                image_ref=image,
                question=meta.question,
                gold_label=meta.gold,
                benchmark_meta={"scene_seed": seed, "ctype": meta.ctype.value},
            )
            out.append((sample, spec))
    return out
