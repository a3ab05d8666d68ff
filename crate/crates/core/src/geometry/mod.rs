//! Ground-truth map construction and the segment assembly pipeline.

pub mod contour;
pub mod maps;
pub mod polygon;
pub mod segment;
pub mod side;

pub use contour::{components, extract_regions, MIN_REGION_AREA};
pub use maps::{build_tc_th_ta, fold_angle, GeoMaps, SHRINK_RATIO};
pub use polygon::{format_annotations, parse_annotations, shrink_polygon, Point, TextPolygon};
pub use segment::{
    intersection_area, nms_segments, propose_segments, rasterize_segments, rotated_iou, tw_from_th, TextSegment,
    NMS_IOU, TW_MAX, TW_MIN,
};
pub use side::{bottom_long_side, sample_bottom, SAMPLE_STEP};
