#!/usr/bin/env python3
"""Write a small synthetic demo corpus (corpus.jsonl) to play with the CLI
without any real data. Sessions are invented; the texts only need to parse
and give retrieval something to chew on."""

import argparse
import json
import pathlib

SESSIONS = [
    {
        "session_id": "demo-grief",
        "title": "Grief after a sudden loss",
        "source": "synthetic",
        "dialogue_text": (
            "Client: Since my father passed I feel like I am moving through fog.\n"
            "Therapist: I'm so sorry. What does the fog feel like day to day?\n"
            "Client: I forget things, I cancel plans, nothing feels worth doing.\n"
            "Therapist: Grief can drain the color out of ordinary things.\n"
            "Client: People keep telling me to move on and it makes me angry.\n"
            "Therapist: Your anger makes sense; grief has no schedule to keep.\n"),
        "explanation_text": (
            "The counselor invites a concrete description of the numbness. "
            "The client describes withdrawal and loss of motivation. "
            "The counselor normalizes grief instead of pushing for progress. "
            "The client voices anger at being rushed by others."),
    },
    {
        "session_id": "demo-panic",
        "title": "Panic on crowded trains",
        "source": "synthetic",
        "dialogue_text": (
            "Client: My chest tightens the second the train doors close.\n"
            "Therapist: What goes through your mind in that moment?\n"
            "Client: That I will faint and everyone will stare at me.\n"
            "Therapist: So the fear is as much about being seen as the faintness itself.\n"
            "Client: Yes, being trapped with all those eyes on me.\n"
            "Therapist: Let's look at what the body is doing before the doors even close.\n"),
        "explanation_text": (
            "The counselor asks for the thought behind the body reaction. "
            "The client reveals a fear of public collapse and judgment. "
            "The counselor reframes the panic as social fear plus bodily alarm. "
            "The client confirms the feeling of being trapped and watched."),
    },
    {
        "session_id": "demo-burnout",
        "title": "Running on empty at work",
        "source": "synthetic",
        "dialogue_text": (
            "Client: I used to love this job and now I feel nothing at all.\n"
            "Therapist: When did the feeling start to drain away?\n"
            "Client: After the third project in a row with no break.\n"
            "Therapist: Three projects without rest is a lot to carry.\n"),
        "explanation_text": (
            "The counselor traces the onset of the numbness. "
            "The client links it to sustained overload without recovery. "
            "The counselor validates the weight of uninterrupted demands."),
    },
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="corpus.jsonl")
    args = parser.parse_args()
    path = pathlib.Path(args.out)
    with path.open("w", encoding="utf-8") as fh:
        for session in SESSIONS:
            fh.write(json.dumps(session, ensure_ascii=False) + "\n")
    print(f"wrote {len(SESSIONS)} sessions -> {path}")


if __name__ == "__main__":
    main()
