#include <openssl/evp.h>

#include <cstring>
#include <memory>

#include "dpir/prf.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define DPIR_HAVE_AESNI 1
#endif

namespace dpir::prf::detail {
namespace {

#ifdef DPIR_HAVE_AESNI

template <int Rcon>
__attribute__((target("aes,sse2"))) inline __m128i expand_step(__m128i key) {
  __m128i t = _mm_aeskeygenassist_si128(key, Rcon);
  t = _mm_shuffle_epi32(t, _MM_SHUFFLE(3, 3, 3, 3));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, t);
}

__attribute__((target("aes,sse2"))) void encrypt_aesni(const std::uint8_t* key,
                                                        const std::uint8_t* in,
                                                        std::uint8_t* out) {
  __m128i k = _mm_loadu_si128(reinterpret_cast<const __m128i*>(key));
  __m128i b = _mm_xor_si128(_mm_loadu_si128(reinterpret_cast<const __m128i*>(in)), k);
  // Round keys are generated on the fly; each seed is used once.
  k = expand_step<0x01>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x02>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x04>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x08>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x10>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x20>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x40>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x80>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x1b>(k); b = _mm_aesenc_si128(b, k);
  k = expand_step<0x36>(k); b = _mm_aesenclast_si128(b, k);
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), b);
}

#endif

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};

void encrypt_evp(const std::uint8_t* key, const std::uint8_t* in, std::uint8_t* out) {
  thread_local std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter> ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key, nullptr);
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  EVP_EncryptUpdate(ctx.get(), out, &len, in, 16);
}

const bool kHasAesNi = [] {
#ifdef DPIR_HAVE_AESNI
  return __builtin_cpu_supports("aes") != 0;
#else
  return false;
#endif
}();

}  // namespace

bool aes_hw_available() { return kHasAesNi; }

void aes128_encrypt(std::span<const std::uint8_t, 16> key,
                    std::span<const std::uint8_t, 16> in,
                    std::span<std::uint8_t, 16> out) {
#ifdef DPIR_HAVE_AESNI
  if (kHasAesNi) {
    encrypt_aesni(key.data(), in.data(), out.data());
    return;
  }
#endif
  encrypt_evp(key.data(), in.data(), out.data());
}

}  // namespace dpir::prf::detail
