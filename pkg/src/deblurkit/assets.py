"""Resolution of optional pretrained-weight assets.

Assets live under an asset root (default ./assets, overridable with the
DEBLURKIT_ASSET_ROOT environment variable) next to a plain-text manifest
with one `name  sha256  relative-path` row per asset.
"""

import hashlib
import os
from pathlib import Path

from .errors import AssetError

ASSET_ROOT_ENV = "DEBLURKIT_ASSET_ROOT"
MANIFEST_NAME = "MANIFEST"


def asset_root(override=None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(ASSET_ROOT_ENV, "assets"))


def parse_manifest(path: Path) -> dict:
    """Parse `name  sha256  relative-path` rows; '#' starts a comment."""
    table = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise AssetError(f"{path}:{lineno}: expected 'name sha256 path', got {line!r}")
        name, digest, relpath = fields
        table[name] = (digest.lower(), relpath)
    return table


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_asset(name: str, root=None) -> Path:
    """Locate and checksum-verify the asset registered under `name`."""
    root = asset_root(root)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise AssetError(f"no asset manifest at {manifest}")
    table = parse_manifest(manifest)
    if name not in table:
        raise AssetError(f"asset {name!r} not listed in {manifest}")
    digest, relpath = table[name]
    path = root / relpath
    if not path.is_file():
        raise AssetError(f"asset file missing: {path}")
    actual = sha256_file(path)
    if actual != digest:
        raise AssetError(f"asset {name!r} checksum mismatch: {actual} != {digest}")
    return path
