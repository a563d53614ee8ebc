"""Scripted backends for pipeline tests."""


class ScriptedBackend:
    """Returns canned completions in order and records prompts."""

    can_score = False
    max_concurrency = 0
    name = "scripted"

    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.prompts = []

    def complete(self, prompt, stop=None, max_tokens=64):
        self.prompts.append(prompt)
        return self.outputs[min(len(self.prompts), len(self.outputs)) - 1]
