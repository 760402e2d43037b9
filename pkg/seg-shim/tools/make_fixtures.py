#!/usr/bin/env python3
"""Regenerate fixtures/golden_cases.json.

Renders 20 seeded synthetic scenes and records wire-contract request/response
pairs from the engine's clean oracle grounder. The shim's golden tests replay
the requests against the toy detector and expect byte-identical instances.

Run from the repo root (claimgate must be importable):

    python3 seg-shim/tools/make_fixtures.py
"""

import json
from pathlib import Path

from claimgate.backends import SegmentRequest
from claimgate.imaging import image_to_base64
from claimgate.scenes import CATEGORY_COLORS, OracleGrounder, generate_scene, render_scene

NUM_SCENES = 20
MIN_SCORE = 0.35
MAX_INSTANCES = 16

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "golden_cases.json"


def cases_for(scene_id: str, spec, grounder, image) -> list[dict]:
    def call(concept: str, max_instances: int = MAX_INSTANCES, min_score: float = MIN_SCORE):
        request = SegmentRequest(
            image=image, concept=concept, max_instances=max_instances, min_score=min_score
        )
        response = grounder.segment(request)
        return {
            "scene": scene_id,
            "request": {
                "concept": concept,
                "max_instances": max_instances,
                "min_score": min_score,
            },
            "expected_instances": response["instances"],
        }

    present = spec.present_categories()
    cases = [call(category) for category in present]
    absent = next(c for c in sorted(CATEGORY_COLORS) if c not in present)
    cases.append(call(absent))
    # Edge cases: a threshold above every toy score, and a cap of one.
    cases.append(call(present[0], min_score=0.995))
    cases.append(call(present[0], max_instances=1))
    return cases


def main() -> None:
    scenes = []
    cases = []
    for seed in range(NUM_SCENES):
        spec = generate_scene(seed)
        image = render_scene(spec)
        scene_id = f"scene{seed:02d}"
        scenes.append(
            {
                "id": scene_id,
                "seed": seed,
                "canvas": list(spec.canvas),
                "categories": spec.present_categories(),
                "image_b64": image_to_base64(image),
            }
        )
        cases.extend(cases_for(scene_id, spec, OracleGrounder(spec), image))

    doc = {"version": 1, "scenes": scenes, "cases": cases}
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT} ({len(scenes)} scenes, {len(cases)} cases)")


if __name__ == "__main__":
    main()
