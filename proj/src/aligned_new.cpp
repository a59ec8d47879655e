#include <cstdlib>
#include <new>

// Eigen reductions peel to the first SIMD-aligned element at run time, so
// the summation order (and the last bits of a float result) follows the
// buffer address. Aligning every heap block to a cache line makes results a
// function of the values alone.
void* operator new(std::size_t n) {
  void* p = nullptr;
  if (posix_memalign(&p, 64, n ? n : 1) != 0) throw std::bad_alloc();
  return p;
}
void* operator new[](std::size_t n) { return ::operator new(n); }
void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { ::operator delete(p); }
void operator delete(void* p, std::size_t) noexcept { ::operator delete(p); }
void operator delete[](void* p, std::size_t) noexcept { ::operator delete(p); }
