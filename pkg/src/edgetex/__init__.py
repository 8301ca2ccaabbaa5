"""edgetex: edge-conditioned multi-view mesh texturing around a pluggable
image generator.

Pipeline shape: load and normalize a mesh, render per-view G-buffers with
the software rasterizer, extract a union edge map (component coloring,
depth, normals), hand it with a reference image to a generator backend,
and back-project each generated view into a UV texture atlas under
keep/refine/new masking.
"""

from .edges import CannyParams, canny, cc_edges, compose_edges, depth_edges, normal_edges
from .generator import (
    GeneratorRequest,
    GeneratorResponse,
    MockBackend,
    OracleBackend,
    RemoteBackend,
    mock_generate,
    oracle_generate,
    remote_generate,
    remote_health,
    remote_invert,
)
from .mesh import (
    ComponentLabeling,
    TriMesh,
    compute_vertex_normals,
    connected_components,
    generate_triangle_charts,
    load_mesh,
    normalize_mesh,
    save_mesh,
)
from .render import (
    Camera,
    GBuffer,
    ViewSpec,
    depth_to_image,
    make_camera,
    normals_to_image,
    rasterize,
    render_cc_colors,
    render_textured,
)
from .texturing import (
    TextureAtlas,
    TexturingConfig,
    compute_view_masks,
    export_textured_mesh,
    project_view,
    texture_mesh,
    view_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "CannyParams",
    "Camera",
    "ComponentLabeling",
    "GBuffer",
    "GeneratorRequest",
    "GeneratorResponse",
    "MockBackend",
    "OracleBackend",
    "RemoteBackend",
    "TextureAtlas",
    "TexturingConfig",
    "TriMesh",
    "ViewSpec",
    "canny",
    "cc_edges",
    "compose_edges",
    "compute_vertex_normals",
    "compute_view_masks",
    "connected_components",
    "depth_edges",
    "depth_to_image",
    "export_textured_mesh",
    "generate_triangle_charts",
    "load_mesh",
    "make_camera",
    "mock_generate",
    "normal_edges",
    "normalize_mesh",
    "normals_to_image",
    "oracle_generate",
    "project_view",
    "rasterize",
    "remote_generate",
    "remote_health",
    "remote_invert",
    "render_cc_colors",
    "render_textured",
    "save_mesh",
    "texture_mesh",
    "view_schedule",
]
