#!/usr/bin/env python3
"""
Filtering and matching on one noisy scene
=========================================

Generate a misaligned scene, drop low-confidence candidates with the
batch score filter, then recover IR/rgb correspondences by search-region
restricted argmax-IoU matching.
"""
from crosspair import (SceneConfig, correspondence_score, filter_batch,
                       generate_scene, match_scene)

cfg = SceneConfig(count=1, boxes_per_scene=8, shift_max=6.0, jitter=0.5,
                  dropout_rate=0.2, spurious_rate=0.5,
                  confidence_noise=0.2, seed=3)
scene = generate_scene(cfg, 0)
print(f"true offset: ({scene.true_offset[0]:+.2f}, {scene.true_offset[1]:+.2f})")
print(f"ir boxes: {len(scene.ir_boxes)}, rgb observations: {len(scene.rgb_obs)}")

# filter: keep candidates scoring at least mean - std over the batch
kept, thr = filter_batch(list(scene.rgb_obs))
print(f"score threshold {thr.tau:.3f} "
      f"(mu {thr.mu:.3f}, sigma {thr.sigma:.3f}), kept {len(kept)}")

result = match_scene(scene.ir_boxes, kept, beta=1.0)
for ir_id, (rgb_id, overlap) in sorted(result.pair_for.items()):
    truth = scene.corr_map.get(rgb_id)
    mark = "ok " if truth == ir_id else "BAD"
    print(f"  ir {ir_id} <- rgb {rgb_id}  iou {overlap:.3f}  {mark}")
print(f"unmatched ir: {list(result.unmatched_ir)}")

score = correspondence_score(result, scene)
print(f"precision {score.precision}, recall {score.recall}")
