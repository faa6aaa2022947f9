"""Scoring and generation against a local causal language model.

The probe answers request files over a simple JSONL wire format:

  request:  {"case_id", "kind": "score"|"generate", "prompt",
             "continuations": [...], "max_new_tokens": 100}
  response: {"case_id", "logprobs": [[...], ...], "generation"}

logprobs[i] lists the per-token natural-log probabilities of continuation
i under teacher forcing. Generation is greedy, so repeated runs over the
same request file produce identical response files.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

logger = logging.getLogger(__name__)


class ModelLoadError(RuntimeError):
    """The model or tokenizer could not be loaded."""


class TokenizationError(ValueError):
    """A continuation tokenized to zero tokens."""


class UnknownCase(KeyError):
    """A request's case id has no entry in the prefix map."""


@dataclass
class ProbeSession:
    """One loaded model plus decoding parameters.

    Decoding is greedy and the model runs in eval mode under no_grad, so
    outputs are bit-for-bit reproducible for a given model and runtime.
    """

    model_id: str
    device: str = "cpu"
    max_new_tokens: int = 100
    batch_size: int = 16
    _model: object = field(default=None, repr=False)
    _tokenizer: object = field(default=None, repr=False)

    def load(self) -> "ProbeSession":
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        try:
            self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
            self._model = AutoModelForCausalLM.from_pretrained(self.model_id)
        except Exception as exc:  # noqa: BLE001
            raise ModelLoadError(f"cannot load {self.model_id!r}: {exc}") from exc
        self._model.to(torch.device(self.device))
        self._model.eval()
        return self

    @property
    def tokenizer(self):
        if self._tokenizer is None:
            self.load()
        return self._tokenizer

    @property
    def model(self):
        if self._model is None:
            self.load()
        return self._model

    # -- encoding helpers -------------------------------------------------

    def _encode(self, text: str) -> List[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def _prompt_ids(self, prompt: str) -> List[int]:
        ids = self._encode(prompt)
        if ids:
            return ids
        bos = self.tokenizer.bos_token_id
        if bos is None:
            raise TokenizationError("empty prompt and the tokenizer has no BOS token")
        return [bos]

    def _continuation_ids(self, prompt: str, continuation: str) -> List[int]:
        # Tokenizers merge a leading space into the next token. Without
        # this normalization the first continuation token is scored as if
        # it were glued to the prompt, systematically underestimating it.
        if prompt and not prompt[-1].isspace() and not continuation[:1].isspace():
            continuation = " " + continuation
        ids = self._encode(continuation)
        if not ids:
            raise TokenizationError(f"continuation {continuation!r} has no tokens")
        return ids

    # -- scoring ----------------------------------------------------------

    def score(self, prompt: str, continuations: Sequence[str]) -> List[List[float]]:
        """Per-token natural-log probabilities of each continuation."""
        results: List[Optional[List[float]]] = [None] * len(continuations)
        items = []
        for index, continuation in enumerate(continuations):
            prompt_ids = self._prompt_ids(prompt)
            cont_ids = self._continuation_ids(prompt, continuation)
            items.append((index, prompt_ids, cont_ids))
        for batch in _batches_by_length(items, self.batch_size):
            for index, logprobs in self._score_batch(batch):
                results[index] = logprobs
        return results  # type: ignore[return-value]

    def _score_batch(self, batch):
        """Forward one batch of equal-length sequences; no padding, so the
        batched result is identical to scoring one by one."""
        import torch

        sequences = [prompt_ids + cont_ids for _, prompt_ids, cont_ids in batch]
        tensor = torch.tensor(sequences, dtype=torch.long, device=self.device)
        with torch.no_grad():
            logits = self.model(tensor).logits
        log_probs = torch.log_softmax(logits.float(), dim=-1)
        out = []
        for row, (index, prompt_ids, cont_ids) in enumerate(batch):
            offset = len(prompt_ids)
            scores = [
                float(log_probs[row, offset + i - 1, token])
                for i, token in enumerate(cont_ids)
            ]
            out.append((index, scores))
        return out

    # -- generation -------------------------------------------------------

    def generate(self, prompt: str, max_new_tokens: Optional[int] = None) -> str:
        """Greedy continuation of the prompt; the prompt itself is excluded."""
        import torch

        budget = self.max_new_tokens if max_new_tokens is None else max_new_tokens
        if budget <= 0:
            return ""
        prompt_ids = self._prompt_ids(prompt)
        tensor = torch.tensor([prompt_ids], dtype=torch.long, device=self.device)
        eos = self.tokenizer.eos_token_id
        with torch.no_grad():
            output = self.model.generate(
                tensor,
                max_new_tokens=budget,
                do_sample=False,
                num_beams=1,
                pad_token_id=eos if eos is not None else 0,
            )
        generated = output[0][len(prompt_ids):].tolist()
        if eos is not None and eos in generated:
            generated = generated[:generated.index(eos)]
        return self.tokenizer.decode(generated, skip_special_tokens=True)

    # -- request files ----------------------------------------------------

    def answer(self, request: dict, prefix: Optional[str] = None) -> dict:
        prompt = request["prompt"]
        if prefix is not None:
            prompt = prefix + prompt
        if request["kind"] == "score":
            logprobs = self.score(prompt, request["continuations"])
            return {"case_id": request["case_id"], "logprobs": logprobs,
                    "generation": None}
        if request["kind"] == "generate":
            text = self.generate(prompt, request.get("max_new_tokens"))
            return {"case_id": request["case_id"], "logprobs": [],
                    "generation": text}
        raise ValueError(f"unknown request kind {request['kind']!r}")

    def run(self, requests: Iterable[dict],
            prefix_map: Optional[Dict[str, str]] = None) -> List[dict]:
        """Answer every request in order.

        With a prefix map, every prompt is prefixed with its case's update
        sentence followed by ". " before scoring or generation; a request
        whose case id is missing from the map raises UnknownCase.
        """
        responses = []
        for request in requests:
            prefix = None
            if prefix_map is not None:
                case = request["case_id"]
                if case not in prefix_map:
                    raise UnknownCase(case)
                prefix = prefix_map[case] + ". "
            responses.append(self.answer(request, prefix))
        return responses


def _batches_by_length(items, batch_size: int):
    """Group (index, prompt_ids, cont_ids) by total length, preserving a
    deterministic order, and cap each batch at batch_size."""
    by_length: Dict[int, list] = {}
    for item in items:
        total = len(item[1]) + len(item[2])
        by_length.setdefault(total, []).append(item)
    for total in sorted(by_length):
        bucket = by_length[total]
        for start in range(0, len(bucket), batch_size):
            yield bucket[start:start + batch_size]


# --- wire files ---------------------------------------------------------------


def read_requests(path: Union[str, Path]) -> List[dict]:
    requests = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                requests.append(json.loads(line))
    return requests


def write_responses(path: Union[str, Path], responses: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for response in responses:
            handle.write(json.dumps(response, sort_keys=True,
                                    separators=(",", ":")) + "\n")
            count += 1
    return count


def load_prefix_map(path: Union[str, Path]) -> Dict[str, str]:
    """case id -> update sentence, from a JSONL prefix map file."""
    table: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            table[row["case_id"]] = row["update_sentence"]
    return table
