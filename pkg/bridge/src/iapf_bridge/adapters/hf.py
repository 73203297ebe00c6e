"""Adapters backed by pretrained Hugging Face models.

Imports of torch/transformers happen at construction time so the mock path
never needs them. Construction fails loudly when a model cannot be
resolved; the server turns that into a nonzero exit before serving.

Tag queries decode greedily (no sampling) so recorded fixtures are
reproducible run to run.
"""
from __future__ import annotations

import re

import numpy as np
from PIL import Image

from ..config import BridgeConfig
from ..protocol import ImageCtx


def _load_image(image: ImageCtx) -> "Image.Image":
    if image.path is None:
        raise ValueError(f"image {image.id!r} carries no pixel path")
    img = Image.open(image.path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return img


def _one_word(text: str) -> str:
    words = re.findall(r"[A-Za-z][A-Za-z-]*", text)
    if not words:
        raise ValueError(f"model answer {text!r} contains no word")
    return words[0].lower()


class HfTagger:
    """Visual question answering with a LLaVA-style model."""

    def __init__(self, model_id: str, cfg: BridgeConfig):
        import torch
        from transformers import AutoProcessor, LlavaForConditionalGeneration

        self.device = cfg.device
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = LlavaForConditionalGeneration.from_pretrained(
            model_id,
            torch_dtype=torch.float16 if cfg.device != "cpu" else torch.float32,
        ).to(cfg.device)
        self.model.eval()

    def _ask(self, img, question: str) -> str:
        import torch

        prompt = f"USER: <image>\n{question} ASSISTANT:"
        inputs = self.processor(images=img, text=prompt, return_tensors="pt").to(self.device)
        with torch.no_grad():
            out = self.model.generate(**inputs, max_new_tokens=24, do_sample=False)
        text = self.processor.batch_decode(out, skip_special_tokens=True)[0]
        return text.split("ASSISTANT:")[-1].strip()

    def tags(self, image: ImageCtx, prompt: str, fg_query: str, bg_query: str):
        img = _load_image(image)
        caption = self._ask(img, "Describe the image in one sentence.")
        fg = _one_word(self._ask(img, fg_query))
        bg_raw = self._ask(img, bg_query)
        bg = [_one_word(w) for w in re.split(r"[,;/]| and ", bg_raw) if w.strip()]
        return caption, [fg], bg or [_one_word(bg_raw)]


class HfDetector:
    """Text-conditioned open-vocabulary detection."""

    def __init__(self, model_id: str, cfg: BridgeConfig):
        from transformers import AutoModelForZeroShotObjectDetection, AutoProcessor

        self.device = cfg.device
        self.box_threshold = cfg.box_threshold
        self.text_threshold = cfg.text_threshold
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = AutoModelForZeroShotObjectDetection.from_pretrained(model_id).to(
            cfg.device
        )
        self.model.eval()

    def boxes(self, image: ImageCtx, tag: str):
        import torch

        img = _load_image(image)
        inputs = self.processor(
            images=img, text=f"{tag.lower()}.", return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
        results = self.processor.post_process_grounded_object_detection(
            outputs,
            inputs.input_ids,
            threshold=self.box_threshold,
            text_threshold=self.text_threshold,
            target_sizes=[img.size[::-1]],
        )[0]
        out = []
        for box, score in zip(results["boxes"].tolist(), results["scores"].tolist()):
            x0, y0, x1, y1 = box
            out.append((float(x0), float(y0), float(x1), float(y1), float(min(1.0, score))))
        return out


class HfClipHeatmapper:
    """Patch-level image/text similarity upsampled to image resolution."""

    def __init__(self, model_id: str, cfg: BridgeConfig):
        from transformers import CLIPModel, CLIPProcessor

        self.device = cfg.device
        self.upsample = cfg.heatmap_upsample
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.model = CLIPModel.from_pretrained(model_id).to(cfg.device)
        self.model.eval()

    def heatmap(self, image: ImageCtx, tag: str) -> np.ndarray:
        import torch

        img = _load_image(image)
        inputs = self.processor(
            images=img, text=[f"a photo of a {tag}"], return_tensors="pt", padding=True
        ).to(self.device)
        with torch.no_grad():
            vision = self.model.vision_model(pixel_values=inputs["pixel_values"])
            patches = vision.last_hidden_state[:, 1:, :]  # drop CLS
            patches = self.model.vision_model.post_layernorm(patches)
            patch_emb = self.model.visual_projection(patches)
            text_emb = self.model.get_text_features(
                input_ids=inputs["input_ids"], attention_mask=inputs["attention_mask"]
            )
        patch_emb = torch.nn.functional.normalize(patch_emb, dim=-1)
        text_emb = torch.nn.functional.normalize(text_emb, dim=-1)
        sim = (patch_emb @ text_emb.T)[0, :, 0]
        side = int(round(float(np.sqrt(sim.numel()))))
        grid = sim.reshape(side, side).float().cpu().numpy()
        # engine-side normalization is per-box min-max, so only shape matters;
        # map to [0, 1] for a well-behaved file range
        lo, hi = float(grid.min()), float(grid.max())
        if hi > lo:
            grid = (grid - lo) / (hi - lo)
        else:
            grid = np.zeros_like(grid)
        resample = Image.BILINEAR if self.upsample == "bilinear" else Image.NEAREST
        resized = Image.fromarray(grid.astype(np.float32), mode="F").resize(
            (image.width, image.height), resample
        )
        return np.asarray(resized, dtype=np.float32)


class HfSamSegmenter:
    """Promptable segmentation from one box plus point prompts."""

    def __init__(self, model_id: str, cfg: BridgeConfig):
        from transformers import SamModel, SamProcessor

        self.device = cfg.device
        self.processor = SamProcessor.from_pretrained(model_id)
        self.model = SamModel.from_pretrained(model_id).to(cfg.device)
        self.model.eval()

    def mask(self, image: ImageCtx, box, fg_points, bg_points) -> np.ndarray:
        import torch

        img = _load_image(image)
        points = [[list(p) for p in (*fg_points, *bg_points)]]
        labels = [[1] * len(fg_points) + [0] * len(bg_points)]
        inputs = self.processor(
            img,
            input_boxes=[[list(box[:4])]],
            input_points=[points],
            input_labels=[labels],
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
        masks = self.processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )[0]
        scores = outputs.iou_scores.cpu().reshape(-1)
        best = int(scores.argmax())
        mask = masks.reshape(-1, *masks.shape[-2:])[best].numpy()
        return mask > 0.5
