"""Feed closed-eye probabilities through the alarm state machine.

At 6 frames per second two seconds is 12 frames. Blinks are far shorter,
so they never trip the alarm. Frames where the face was lost hold the
counter where it was.
"""

from drowsy.decision import DecisionConfig, run_stream

cfg = DecisionConfig(fps=6, alarm_seconds=2, prob_threshold=0.5)
print(f"alarm after {cfg.alarm_frames} closed frames")

awake = [0.1] * 10
blink = [0.8, 0.9]
lost_face = [None] * 3

# six closed frames, three without a face, then eight more closed frames
stream = awake + blink + awake + [0.9] * 6 + lost_face + [0.9] * 8 + awake
result = run_stream(stream, cfg)
for ev in result.events:
    print(ev.to_json())
print(f"{len(stream)} frames, {result.alarms} alarm(s), longest closed run {result.longest_closed_run}")
