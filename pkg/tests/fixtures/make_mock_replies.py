"""Regenerates mock_replies.json, the canned model replies used by the tests."""

import json
from pathlib import Path


def vqa(sub, q, opts, ans):
    return {"subtask": sub, "question": q, "options": dict(zip("ABCD", opts)), "answer": ans}


def fence(items, prose="Here are the items."):
    return prose + "\n```json\n" + json.dumps({"items": items}, indent=1) + "\n```\n"


three_option = {"subtask": "Mov. Patterns & Traj.", "question": "Which path best describes A?",
                "options": {"A": "Circle", "B": "Straight line", "C": "Zig-zag"}, "answer": "B"}

replies = [
    {"kind": "inter_object_vqa", "key": "*", "replies": [fence([
        vqa("Move. & Temp. Dyn.", "How does the distance between A and B change over the video?",
            ["It first shrinks, then grows", "It only grows", "It stays constant", "It only shrinks"], "A"),
        vqa("Spatial Rel. & Change", "When A passes B, which object is moving?",
            ["B", "Both", "A", "Neither"], "C")])]},
    # first reply is malformed (three options) and must be retried
    {"kind": "object_scene_vqa", "key": "*", "replies": [
        fence([three_option]),
        fence([vqa("Mov. Patterns & Traj.", "Which path best describes A?",
                   ["Circle", "Straight line", "Zig-zag", "It stays still"], "B")])]},
    {"kind": "camera_object_vqa", "key": "*", "replies": [fence([
        vqa("Cam. Motion & Orient.", "How does the camera move?",
            ["It pans left", "It pans right", "It is static", "It moves forward"], "B"),
        vqa("Temp. & Visual Change", "When does B first become visible?",
            ["At the start", "Never", "Near the end", "After about 1.7 s"], "D")])]},
    # first reply names an object the video does not have
    {"kind": "inter_object_grounding", "key": "*", "replies": [
        fence([{"object_id": 7, "referring_text": "the object that overtakes the person"}]),
        fence([{"object_id": 1, "referring_text": "the object that passes the standing person"}])]},
    {"kind": "object_scene_grounding", "key": "*", "replies": [
        fence([{"object_id": 2, "referring_text": "the object that stays in place while the other moves past"}])]},
    {"kind": "camera_object_grounding", "key": "*", "replies": [
        fence([{"object_id": 1, "referring_text": "the object crossing the view from left to right"}])]},
    {"kind": "vqa_answer", "key": "*", "replies": ["A", "The answer is C.", "B", "B", "I think it is (A)"]},
    {"kind": "diagnostic", "key": "*", "replies": [
        "```json\n" + json.dumps([1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1, 1]) + "\n```"]},
    {"kind": "vlm_verdict", "key": "*", "replies": ["pass"]},
]

if __name__ == "__main__":
    out = Path(__file__).with_name("mock_replies.json")
    out.write_text(json.dumps({"replies": replies}, indent=1) + "\n")
