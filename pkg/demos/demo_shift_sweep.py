#!/usr/bin/env python3
"""
Matcher robustness to position shift
====================================

Sweep the true cross-modality offset over a grid and print match recall
as an ascii heat map. Recall peaks at zero shift and falls off as the
offset grows past the search-region reach.
"""
from crosspair import SceneConfig, correspondence_score, generate_scenes, match_scene
from crosspair.metrics import pooled_correspondence

STEPS = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0]
SHADES = " .:-=+*#@"


def recall_at(dx, dy):
    cfg = SceneConfig(count=10, boxes_per_scene=6, shift_max=15.0,
                      jitter=0.5, offset_override=(dx, dy), seed=11)
    scores = [correspondence_score(match_scene(s.ir_boxes, list(s.rgb_obs)), s)
              for s in generate_scenes(cfg)]
    agg = pooled_correspondence(scores)
    return agg.recall if agg.recall is not None else 0.0


print("match recall over (dx, dy):\n")
print("        " + "".join(f"{dx:+6.0f}" for dx in STEPS))
for dy in STEPS:
    recalls = [recall_at(dx, dy) for dx in STEPS]
    row = "".join(f" {r:5.2f}" for r in recalls)
    shade = "".join(SHADES[int(r * (len(SHADES) - 1))] for r in recalls)
    print(f"{dy:+6.0f} {row}   {shade}")
