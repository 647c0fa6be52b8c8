#include "voxelview/conv.hpp"

#include <stdexcept>
#include <string>

namespace voxelview {

// All conv kernels are written as gathers: every output element is computed
// by exactly one loop iteration, so parallel execution and re-runs are
// bit-deterministic.

namespace {

struct Geom2d {
  int a_ch, a_h, a_w;  // source tensor
  int b_ch, b_h, b_w;  // destination tensor
  int k, s, p;
};

struct Geom3d {
  int a_ch, a_d, a_h, a_w;
  int b_ch, b_d, b_h, b_w;
  int k, s, p;
};

// dst[b,y,x] (+)= sum_{a,ky,kx} src[a, y*s-p+ky, x*s-p+kx] * w[b,a,ky,kx]
void gather_down2d(const double* src, const double* wgt, const double* bias, double* dst,
                   const Geom2d& g, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < g.b_ch; ++b) {
    for (int y = 0; y < g.b_h; ++y) {
      for (int x = 0; x < g.b_w; ++x) {
        double acc = 0;
        for (int a = 0; a < g.a_ch; ++a) {
          const double* wrow = wgt + ((static_cast<long>(b) * g.a_ch + a) * g.k) * g.k;
          for (int ky = 0; ky < g.k; ++ky) {
            const int sy = y * g.s - g.p + ky;
            if (sy < 0 || sy >= g.a_h) continue;
            const double* srow = src + (static_cast<long>(a) * g.a_h + sy) * g.a_w;
            const double* wk = wrow + static_cast<long>(ky) * g.k;
            for (int kx = 0; kx < g.k; ++kx) {
              const int sx = x * g.s - g.p + kx;
              if (sx < 0 || sx >= g.a_w) continue;
              acc += srow[sx] * wk[kx];
            }
          }
        }
        if (bias) acc += bias[b];
        double& out = dst[(static_cast<long>(b) * g.b_h + y) * g.b_w + x];
        out = accumulate ? out + acc : acc;
      }
    }
  }
}

// dst[b,y,x] (+)= sum_{a,ky,kx : (y+p-ky)%s==0} src[a,(y+p-ky)/s,(x+p-kx)/s] * w[a,b,ky,kx]
void gather_up2d(const double* src, const double* wgt, const double* bias, double* dst,
                 const Geom2d& g, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < g.b_ch; ++b) {
    for (int y = 0; y < g.b_h; ++y) {
      for (int x = 0; x < g.b_w; ++x) {
        double acc = 0;
        for (int ky = 0; ky < g.k; ++ky) {
          const int ny = y + g.p - ky;
          if (ny < 0 || ny % g.s != 0) continue;
          const int sy = ny / g.s;
          if (sy >= g.a_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int nx = x + g.p - kx;
            if (nx < 0 || nx % g.s != 0) continue;
            const int sx = nx / g.s;
            if (sx >= g.a_w) continue;
            for (int a = 0; a < g.a_ch; ++a) {
              acc += src[(static_cast<long>(a) * g.a_h + sy) * g.a_w + sx] *
                     wgt[((static_cast<long>(a) * g.b_ch + b) * g.k + ky) * g.k + kx];
            }
          }
        }
        if (bias) acc += bias[b];
        double& out = dst[(static_cast<long>(b) * g.b_h + y) * g.b_w + x];
        out = accumulate ? out + acc : acc;
      }
    }
  }
}

// dw[m,n,ky,kx] += sum_{sy,sx} small[m,sy,sx] * big[n, sy*s-p+ky, sx*s-p+kx]
// `small` spans the stride-decimated spatial extent.
void weight_grad2d(const double* small, int m_ch, int m_h, int m_w, const double* big, int n_ch,
                   int n_h, int n_w, double* dw, int k, int s, int p) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int m = 0; m < m_ch; ++m) {
    for (int n = 0; n < n_ch; ++n) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double acc = 0;
          for (int sy = 0; sy < m_h; ++sy) {
            const int by = sy * s - p + ky;
            if (by < 0 || by >= n_h) continue;
            const double* srow = small + (static_cast<long>(m) * m_h + sy) * m_w;
            const double* brow = big + (static_cast<long>(n) * n_h + by) * n_w;
            for (int sx = 0; sx < m_w; ++sx) {
              const int bx = sx * s - p + kx;
              if (bx < 0 || bx >= n_w) continue;
              acc += srow[sx] * brow[bx];
            }
          }
          dw[((static_cast<long>(m) * n_ch + n) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
}

void gather_down3d(const double* src, const double* wgt, const double* bias, double* dst,
                   const Geom3d& g, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < g.b_ch; ++b) {
    for (int z = 0; z < g.b_d; ++z) {
      for (int y = 0; y < g.b_h; ++y) {
        for (int x = 0; x < g.b_w; ++x) {
          double acc = 0;
          for (int a = 0; a < g.a_ch; ++a) {
            for (int kz = 0; kz < g.k; ++kz) {
              const int sz = z * g.s - g.p + kz;
              if (sz < 0 || sz >= g.a_d) continue;
              for (int ky = 0; ky < g.k; ++ky) {
                const int sy = y * g.s - g.p + ky;
                if (sy < 0 || sy >= g.a_h) continue;
                const double* srow =
                    src + ((static_cast<long>(a) * g.a_d + sz) * g.a_h + sy) * g.a_w;
                const double* wk =
                    wgt + (((static_cast<long>(b) * g.a_ch + a) * g.k + kz) * g.k + ky) * g.k;
                for (int kx = 0; kx < g.k; ++kx) {
                  const int sx = x * g.s - g.p + kx;
                  if (sx < 0 || sx >= g.a_w) continue;
                  acc += srow[sx] * wk[kx];
                }
              }
            }
          }
          if (bias) acc += bias[b];
          double& out = dst[((static_cast<long>(b) * g.b_d + z) * g.b_h + y) * g.b_w + x];
          out = accumulate ? out + acc : acc;
        }
      }
    }
  }
}

void gather_up3d(const double* src, const double* wgt, const double* bias, double* dst,
                 const Geom3d& g, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < g.b_ch; ++b) {
    for (int z = 0; z < g.b_d; ++z) {
      for (int y = 0; y < g.b_h; ++y) {
        for (int x = 0; x < g.b_w; ++x) {
          double acc = 0;
          for (int kz = 0; kz < g.k; ++kz) {
            const int nz = z + g.p - kz;
            if (nz < 0 || nz % g.s != 0) continue;
            const int sz = nz / g.s;
            if (sz >= g.a_d) continue;
            for (int ky = 0; ky < g.k; ++ky) {
              const int ny = y + g.p - ky;
              if (ny < 0 || ny % g.s != 0) continue;
              const int sy = ny / g.s;
              if (sy >= g.a_h) continue;
              for (int kx = 0; kx < g.k; ++kx) {
                const int nx = x + g.p - kx;
                if (nx < 0 || nx % g.s != 0) continue;
                const int sx = nx / g.s;
                if (sx >= g.a_w) continue;
                for (int a = 0; a < g.a_ch; ++a) {
                  acc += src[((static_cast<long>(a) * g.a_d + sz) * g.a_h + sy) * g.a_w + sx] *
                         wgt[(((static_cast<long>(a) * g.b_ch + b) * g.k + kz) * g.k + ky) * g.k +
                             kx];
                }
              }
            }
          }
          if (bias) acc += bias[b];
          double& out = dst[((static_cast<long>(b) * g.b_d + z) * g.b_h + y) * g.b_w + x];
          out = accumulate ? out + acc : acc;
        }
      }
    }
  }
}

void weight_grad3d(const double* small, int m_ch, int m_d, int m_h, int m_w, const double* big,
                   int n_ch, int n_d, int n_h, int n_w, double* dw, int k, int s, int p) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int m = 0; m < m_ch; ++m) {
    for (int n = 0; n < n_ch; ++n) {
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0;
            for (int sz = 0; sz < m_d; ++sz) {
              const int bz = sz * s - p + kz;
              if (bz < 0 || bz >= n_d) continue;
              for (int sy = 0; sy < m_h; ++sy) {
                const int by = sy * s - p + ky;
                if (by < 0 || by >= n_h) continue;
                const double* srow =
                    small + ((static_cast<long>(m) * m_d + sz) * m_h + sy) * m_w;
                const double* brow = big + ((static_cast<long>(n) * n_d + bz) * n_h + by) * n_w;
                for (int sx = 0; sx < m_w; ++sx) {
                  const int bx = sx * s - p + kx;
                  if (bx < 0 || bx >= n_w) continue;
                  acc += srow[sx] * brow[bx];
                }
              }
            }
            dw[(((static_cast<long>(m) * n_ch + n) * k + kz) * k + ky) * k + kx] += acc;
          }
        }
      }
    }
  }
}

// db[c] += sum over spatial of g[c,...]
void bias_grad(const double* g, int ch, long spatial, double* db) {
  for (int c = 0; c < ch; ++c) {
    double acc = 0;
    const double* gc = g + static_cast<long>(c) * spatial;
    for (long i = 0; i < spatial; ++i) acc += gc[i];
    db[c] += acc;
  }
}

int out_extent_down(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }
int out_extent_up(int in, int k, int s, int p) { return (in - 1) * s - 2 * p + k; }

void check_conv_args(const char* name, int k, int s, int p, int min_in) {
  if (s < 1) throw std::invalid_argument(std::string(name) + ": stride must be >= 1");
  if (p < 0) throw std::invalid_argument(std::string(name) + ": padding must be >= 0");
  if (k > min_in + 2 * p)
    throw std::invalid_argument(std::string(name) + ": kernel " + std::to_string(k) +
                                " exceeds padded input extent " + std::to_string(min_in + 2 * p));
}

void check_bias(const char* name, const Tensor& bias, int co) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != co)
    throw std::invalid_argument(std::string(name) + ": bias shape " + shape_str(bias.shape()) +
                                " does not match " + std::to_string(co) + " output channels");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 3 || weight.rank() != 4)
    throw std::invalid_argument("conv2d: expected input rank 3 and weight rank 4, got " +
                                shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (weight.dim(1) != input.dim(0))
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                                " vs weight " + shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3))
    throw std::invalid_argument("conv2d: kernel must be square, got " + shape_str(weight.shape()));
  const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int co = weight.dim(0), k = weight.dim(2);
  check_conv_args("conv2d", k, stride, padding, std::min(h, w));
  check_bias("conv2d", bias, co);
  const int oh = out_extent_down(h, k, stride, padding);
  const int ow = out_extent_down(w, k, stride, padding);

  std::vector<Tensor> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  const Geom2d geo{ci, h, w, co, oh, ow, k, stride, padding};

  Tensor out = Tensor::make_op({co, oh, ow}, parents, [geo](TensorNode& self) {
    TensorNode& x = *self.parents[0];
    TensorNode& wgt = *self.parents[1];
    const double* g = self.grad.data();
    if (x.requires_grad) {
      x.ensure_grad();
      // Swap roles: gather the output grad back up to input resolution.
      Geom2d up{geo.b_ch, geo.b_h, geo.b_w, geo.a_ch, geo.a_h, geo.a_w, geo.k, geo.s, geo.p};
      gather_up2d(g, wgt.data.data(), nullptr, x.grad.data(), up, /*accumulate=*/true);
    }
    if (wgt.requires_grad) {
      wgt.ensure_grad();
      weight_grad2d(g, geo.b_ch, geo.b_h, geo.b_w, x.data.data(), geo.a_ch, geo.a_h, geo.a_w,
                    wgt.grad.data(), geo.k, geo.s, geo.p);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      TensorNode& b = *self.parents[2];
      b.ensure_grad();
      bias_grad(g, geo.b_ch, static_cast<long>(geo.b_h) * geo.b_w, b.grad.data());
    }
  });

  gather_down2d(input.data(), weight.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                geo, /*accumulate=*/false);
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding) {
  if (input.rank() != 3 || weight.rank() != 4)
    throw std::invalid_argument("conv_transpose2d: expected input rank 3 and weight rank 4, got " +
                                shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (weight.dim(0) != input.dim(0))
    throw std::invalid_argument("conv_transpose2d: channel mismatch, input " +
                                shape_str(input.shape()) + " vs weight " +
                                shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3))
    throw std::invalid_argument("conv_transpose2d: kernel must be square, got " +
                                shape_str(weight.shape()));
  const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int co = weight.dim(1), k = weight.dim(2);
  if (stride < 1) throw std::invalid_argument("conv_transpose2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv_transpose2d: padding must be >= 0");
  check_bias("conv_transpose2d", bias, co);
  const int oh = out_extent_up(h, k, stride, padding);
  const int ow = out_extent_up(w, k, stride, padding);
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv_transpose2d: non-positive output extent for input " +
                                shape_str(input.shape()));

  std::vector<Tensor> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  const Geom2d geo{ci, h, w, co, oh, ow, k, stride, padding};

  Tensor out = Tensor::make_op({co, oh, ow}, parents, [geo](TensorNode& self) {
    TensorNode& x = *self.parents[0];
    TensorNode& wgt = *self.parents[1];
    const double* g = self.grad.data();
    if (x.requires_grad) {
      x.ensure_grad();
      Geom2d down{geo.b_ch, geo.b_h, geo.b_w, geo.a_ch, geo.a_h, geo.a_w, geo.k, geo.s, geo.p};
      gather_down2d(g, wgt.data.data(), nullptr, x.grad.data(), down, /*accumulate=*/true);
    }
    if (wgt.requires_grad) {
      wgt.ensure_grad();
      weight_grad2d(x.data.data(), geo.a_ch, geo.a_h, geo.a_w, g, geo.b_ch, geo.b_h, geo.b_w,
                    wgt.grad.data(), geo.k, geo.s, geo.p);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      TensorNode& b = *self.parents[2];
      b.ensure_grad();
      bias_grad(g, geo.b_ch, static_cast<long>(geo.b_h) * geo.b_w, b.grad.data());
    }
  });

  gather_up2d(input.data(), weight.data(), bias.defined() ? bias.data() : nullptr, out.data(), geo,
              /*accumulate=*/false);
  return out;
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 4 || weight.rank() != 5)
    throw std::invalid_argument("conv3d: expected input rank 4 and weight rank 5, got " +
                                shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (weight.dim(1) != input.dim(0))
    throw std::invalid_argument("conv3d: channel mismatch, input " + shape_str(input.shape()) +
                                " vs weight " + shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3) || weight.dim(2) != weight.dim(4))
    throw std::invalid_argument("conv3d: kernel must be cubic, got " + shape_str(weight.shape()));
  const int ci = input.dim(0), d = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int co = weight.dim(0), k = weight.dim(2);
  check_conv_args("conv3d", k, stride, padding, std::min(d, std::min(h, w)));
  check_bias("conv3d", bias, co);
  const int od = out_extent_down(d, k, stride, padding);
  const int oh = out_extent_down(h, k, stride, padding);
  const int ow = out_extent_down(w, k, stride, padding);

  std::vector<Tensor> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  const Geom3d geo{ci, d, h, w, co, od, oh, ow, k, stride, padding};

  Tensor out = Tensor::make_op({co, od, oh, ow}, parents, [geo](TensorNode& self) {
    TensorNode& x = *self.parents[0];
    TensorNode& wgt = *self.parents[1];
    const double* g = self.grad.data();
    if (x.requires_grad) {
      x.ensure_grad();
      Geom3d up{geo.b_ch, geo.b_d, geo.b_h, geo.b_w, geo.a_ch, geo.a_d,
                geo.a_h, geo.a_w, geo.k, geo.s, geo.p};
      gather_up3d(g, wgt.data.data(), nullptr, x.grad.data(), up, /*accumulate=*/true);
    }
    if (wgt.requires_grad) {
      wgt.ensure_grad();
      weight_grad3d(g, geo.b_ch, geo.b_d, geo.b_h, geo.b_w, x.data.data(), geo.a_ch, geo.a_d,
                    geo.a_h, geo.a_w, wgt.grad.data(), geo.k, geo.s, geo.p);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      TensorNode& b = *self.parents[2];
      b.ensure_grad();
      bias_grad(g, geo.b_ch, static_cast<long>(geo.b_d) * geo.b_h * geo.b_w, b.grad.data());
    }
  });

  gather_down3d(input.data(), weight.data(), bias.defined() ? bias.data() : nullptr, out.data(),
                geo, /*accumulate=*/false);
  return out;
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int padding) {
  if (input.rank() != 4 || weight.rank() != 5)
    throw std::invalid_argument(
        "conv_transpose3d: expected input rank 4 and weight rank 5, got " +
        shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (weight.dim(0) != input.dim(0))
    throw std::invalid_argument("conv_transpose3d: channel mismatch, input " +
                                shape_str(input.shape()) + " vs weight " +
                                shape_str(weight.shape()));
  const int ci = input.dim(0), d = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int co = weight.dim(1), k = weight.dim(2);
  if (stride < 1) throw std::invalid_argument("conv_transpose3d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv_transpose3d: padding must be >= 0");
  check_bias("conv_transpose3d", bias, co);
  const int od = out_extent_up(d, k, stride, padding);
  const int oh = out_extent_up(h, k, stride, padding);
  const int ow = out_extent_up(w, k, stride, padding);
  if (od < 1 || oh < 1 || ow < 1)
    throw std::invalid_argument("conv_transpose3d: non-positive output extent for input " +
                                shape_str(input.shape()));

  std::vector<Tensor> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  const Geom3d geo{ci, d, h, w, co, od, oh, ow, k, stride, padding};

  Tensor out = Tensor::make_op({co, od, oh, ow}, parents, [geo](TensorNode& self) {
    TensorNode& x = *self.parents[0];
    TensorNode& wgt = *self.parents[1];
    const double* g = self.grad.data();
    if (x.requires_grad) {
      x.ensure_grad();
      Geom3d down{geo.b_ch, geo.b_d, geo.b_h, geo.b_w, geo.a_ch, geo.a_d,
                  geo.a_h, geo.a_w, geo.k, geo.s, geo.p};
      gather_down3d(g, wgt.data.data(), nullptr, x.grad.data(), down, /*accumulate=*/true);
    }
    if (wgt.requires_grad) {
      wgt.ensure_grad();
      weight_grad3d(x.data.data(), geo.a_ch, geo.a_d, geo.a_h, geo.a_w, g, geo.b_ch, geo.b_d,
                    geo.b_h, geo.b_w, wgt.grad.data(), geo.k, geo.s, geo.p);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      TensorNode& b = *self.parents[2];
      b.ensure_grad();
      bias_grad(g, geo.b_ch, static_cast<long>(geo.b_d) * geo.b_h * geo.b_w, b.grad.data());
    }
  });

  gather_up3d(input.data(), weight.data(), bias.defined() ? bias.data() : nullptr, out.data(), geo,
              /*accumulate=*/false);
  return out;
}

}  // namespace voxelview
