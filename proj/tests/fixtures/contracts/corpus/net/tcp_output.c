#include <net/tcp.h>

/* Do all connect socket setups that can be done AF independent. */
static void tcp_connect_init(struct sock *sk)
{
	const struct dst_entry *dst = __sk_dst_get(sk);
	struct tcp_sock *tp = tcp_sk(sk);
	__u8 rcv_wscale;

	if (sock_net(sk)->ipv4.sysctl_tcp_timestamps)
		tp->tcp_header_len += TCPOLEN_TSTAMP_ALIGNED;
	tcp_mtup_init(sk);
}

static int tcp_transmit_helper(struct sock *sk, int len)
{
	if (len < 0)
		return -EINVAL;
	return len;
}
