#include <net/tcp.h>

/*
 * tcp_v4_connect - initiate an outgoing connection
 * @sk: socket, must not be NULL
 * @uaddr: destination address
 *
 * Returns 0 on success or a negative errno.
 */
int tcp_v4_connect(struct sock *sk, struct sockaddr *uaddr, int addr_len)
{
	struct sockaddr_in *usin = (struct sockaddr_in *)uaddr;

	if (addr_len < sizeof(struct sockaddr_in))
		return -EINVAL;
	/* not a function: if (x) { } */
	return 0;
}

int tcp_v4_prototype_only(struct sock *sk);
