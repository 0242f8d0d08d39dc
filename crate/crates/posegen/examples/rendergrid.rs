use posegen::imageio::write_png;
use posegen::pose::{make_vocabulary, PoseTarget};
use posegen::tensor::Tensor;
use posegen::turntable::*;

fn main() {
    let vocab = make_vocabulary(6, 1).unwrap();
    let cfg = RenderConfig::default();
    let n = 64;
    let mut grid = Tensor::zeros([1, 3, n * 6, n * 6]);
    for class_idx in 0..6 {
        let spec = instance_spec(class_idx, 0, 42);
        for yaw in 0..6 {
            let img = render_view(&spec, &vocab, PoseTarget { yaw: yaw as f32, pitch: 0.0 }, &cfg).unwrap();
            for c in 0..3 {
                for y in 0..n {
                    for x in 0..n {
                        let gy = class_idx * n + y;
                        let gx = yaw * n + x;
                        grid.data_mut()[c * 36 * n * n + gy * 6 * n + gx] =
                            img.data()[c * n * n + y * n + x];
                    }
                }
            }
        }
    }
    write_png(std::path::Path::new("/tmp/rendergrid.png"), &grid).unwrap();
    println!("wrote /tmp/rendergrid.png");
}
